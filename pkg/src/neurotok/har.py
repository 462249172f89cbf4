"""Hierarchical autoregressive masked pre-training on frozen RVQ tokens.

A fresh encoder sees the patch sequence with masked rows replaced by a
learned mask token.  For every masked position and each domain, layer l is
predicted from the encoder output plus the embeddings of the same-domain
codes of layers 1..l-1:

    logits_l = head_l(LN_l(h + sum_{k<l} Embed_k(z_k)))

Training conditions on the tokenizer's codes (teacher forcing); inference
feeds back its own greedy predictions.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nets
from .errors import EmptyMask, IndexOutOfRange, NonFiniteLoss, ShapeMismatch
from .importance import curriculum_weight, sample_mask, score_patches
from .nets import ModelConfig
from .optim import AdamW, TrainConfig, batches, lr_at, rng_stream
from .tokenizer import DOMAINS, Tokenizer, _as_tokens

log = logging.getLogger(__name__)

# Pre-training has no codebooks to destabilise, so it keeps the reference
# learning rate; the tokenizer's desk default is lower.
PRETRAIN_DEFAULTS = {"lr": 5e-4}


def pretrain_config(**overrides) -> TrainConfig:
    return TrainConfig.from_dict({**PRETRAIN_DEFAULTS, **overrides})


def layer_weights(depth: int) -> np.ndarray:
    """lambda_l = 2^-(l-1) for l = 1..depth."""
    return 2.0 ** -np.arange(depth, dtype=np.float64)


def init_har(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, ad.Tensor]:
    """Encoder, mask token, and per-domain heads and code embeddings."""
    params = nets.init_encoder(cfg, rng, "enc")
    params["mask_token"] = ad.Tensor(rng.normal(0.0, 0.02, cfg.embed_dim), True)
    for d in DOMAINS:
        for layer in range(cfg.rvq_layers):
            nets._norm(params, f"har.{d}.ln{layer}", cfg.embed_dim)
            nets._linear(params, rng, f"har.{d}.head{layer}", cfg.embed_dim, cfg.codebook_size)
        # one table per conditioning layer, shared by every deeper target layer
        for k in range(cfg.rvq_layers - 1):
            params[f"har.{d}.embed{k}"] = ad.Tensor(rng.normal(0.0, 0.02, (cfg.codebook_size, cfg.embed_dim)), True)
    return params


def predict_layer(params, h, prior_codes, domain: str, layer: int) -> ad.Tensor:
    """Logits over K codes for 1-based ``layer`` given codes of layers 1..layer-1.

    ``h`` is (..., d); ``prior_codes`` is (..., layer-1) or anything with a
    trailing axis of at least layer-1 entries (extra columns are ignored).
    """
    h = ad.as_tensor(h)
    if layer < 1 or f"har.{domain}.head{layer - 1}.w" not in params:
        raise IndexOutOfRange(f"no prediction head for {domain} layer {layer}")
    z = h
    if layer > 1:
        prior = np.asarray(prior_codes, dtype=np.int64)
        if prior.shape[:-1] != h.shape[:-1] or prior.shape[-1] < layer - 1:
            raise ShapeMismatch(f"conditioning codes {prior.shape} do not cover layers 1..{layer - 1} for {h.shape}")
        for k in range(layer - 1):
            z = z + ad.embedding_lookup(params[f"har.{domain}.embed{k}"], prior[..., k])
    return nets.linear(params, f"har.{domain}.head{layer - 1}", nets.norm(params, f"har.{domain}.ln{layer - 1}", z))


@dataclass
class HarLossReport:
    losses: dict[str, list[float]]      # per domain, per layer cross-entropy
    accuracy: dict[str, list[float]]    # per domain, per layer top-1 accuracy
    weights: list[float]
    total: float

    def flat(self) -> dict[str, float]:
        out = {"l_har": self.total}
        for d in DOMAINS:
            for i, (loss, acc) in enumerate(zip(self.losses[d], self.accuracy[d])):
                out[f"loss_{d}_{i + 1}"] = loss
                out[f"acc_{d}_{i + 1}"] = acc
        return out


def _check_targets(h: ad.Tensor, targets: np.ndarray, depth: int) -> np.ndarray:
    t = np.asarray(targets, dtype=np.int64)
    if h.shape[0] == 0 or t.shape[0] == 0:
        raise EmptyMask("no masked positions to score")
    if t.shape != (h.shape[0], len(DOMAINS), depth):
        raise ShapeMismatch(f"targets {t.shape} != ({h.shape[0]}, {len(DOMAINS)}, {depth})")
    return t


def har_loss(params, h_masked, targets, weights=None) -> tuple[ad.Tensor, HarLossReport]:
    """Teacher-forced weighted cross-entropy.

    ``h_masked`` is (M, d) encoder output at masked positions and ``targets``
    the (M, 2, L) tokenizer codes there.  The total is
    sum_l weights[l] * (CE_time_l + CE_freq_l), each CE a mean over positions.
    """
    h_masked = ad.as_tensor(h_masked)
    depth = np.asarray(targets).shape[-1]
    t = _check_targets(h_masked, targets, depth)
    lam = layer_weights(depth) if weights is None else np.asarray(weights, dtype=np.float64)
    total = None
    losses = {d: [] for d in DOMAINS}
    acc = {d: [] for d in DOMAINS}
    for di, d in enumerate(DOMAINS):
        for layer in range(1, depth + 1):
            logits = predict_layer(params, h_masked, t[:, di, :], d, layer)
            ce = ad.cross_entropy_with_logits(logits, t[:, di, layer - 1])
            term = ce * float(lam[layer - 1])
            total = term if total is None else total + term
            losses[d].append(float(ce.data))
            acc[d].append(float((logits.data.argmax(-1) == t[:, di, layer - 1]).mean()))
    return total, HarLossReport(losses, acc, lam.tolist(), float(total.data))


def independent_loss(params, h_masked, targets) -> ad.Tensor:
    """Unweighted sum of per-layer cross-entropies with no code conditioning."""
    h_masked = ad.as_tensor(h_masked)
    depth = np.asarray(targets).shape[-1]
    t = _check_targets(h_masked, targets, depth)
    total = None
    for di, d in enumerate(DOMAINS):
        for layer in range(1, depth + 1):
            z = nets.norm(params, f"har.{d}.ln{layer - 1}", h_masked)
            logits = nets.linear(params, f"har.{d}.head{layer - 1}", z)
            ce = ad.cross_entropy_with_logits(logits, t[:, di, layer - 1])
            total = ce if total is None else total + ce
    return total


def autoregressive_infer(params, h, depth: int) -> np.ndarray:
    """Greedy chain: each layer conditions on the codes predicted for the layers above it; (..., 2, L)."""
    h = ad.as_tensor(h)
    out = np.zeros(h.shape[:-1] + (len(DOMAINS), depth), dtype=np.int64)
    for di, d in enumerate(DOMAINS):
        for layer in range(1, depth + 1):
            out[..., di, layer - 1] = predict_layer(params, h, out[..., di, :], d, layer).data.argmax(-1)
    return out


def teacher_forced_argmax(params, h, targets) -> np.ndarray:
    """Per-layer argmax when every layer conditions on the true codes; (..., 2, L)."""
    h = ad.as_tensor(h)
    t = np.asarray(targets, dtype=np.int64)
    out = np.zeros_like(t)
    for di, d in enumerate(DOMAINS):
        for layer in range(1, t.shape[-1] + 1):
            out[..., di, layer - 1] = predict_layer(params, h, t[..., di, :], d, layer).data.argmax(-1)
    return out


class Pretrainer:
    def __init__(self, cfg: ModelConfig, params: dict | None = None):
        self.cfg = cfg
        self.params = params if params is not None else init_har(cfg, rng_stream(cfg.seed, "har-init"))

    def encode(self, x, mask=None) -> ad.Tensor:
        """(B, N, d) encoder output with masked rows replaced by the mask token."""
        return nets.encode_batch(self.params, x, self.cfg, "enc", mask=mask, mask_token=self.params["mask_token"])

    def masked_outputs(self, x, mask) -> ad.Tensor:
        h = self.encode(x, mask)
        flat = h.reshape(-1, self.cfg.embed_dim)
        return flat[np.flatnonzero(np.asarray(mask, dtype=bool).ravel())]

    def loss(self, x, codes, mask, weights=None):
        codes = np.asarray(codes, dtype=np.int64)
        m = np.asarray(mask, dtype=bool)
        if not m.any():
            raise EmptyMask("mask selects no positions")
        targets = codes.reshape((-1,) + codes.shape[-2:])[np.flatnonzero(m.ravel())]
        return har_loss(self.params, self.masked_outputs(x, m), targets, weights)

    def inference_gap(self, x, codes, mask) -> list[float]:
        """Per-layer fraction of masked positions where greedy inference disagrees with teacher-forced argmax.

        Both domains are pooled.  Layer 1 is always 0 since neither path conditions it.
        """
        codes = np.asarray(codes, dtype=np.int64)
        m = np.asarray(mask, dtype=bool).ravel()
        h = self.masked_outputs(x, mask).data
        targets = codes.reshape((-1,) + codes.shape[-2:])[np.flatnonzero(m)]
        ar = autoregressive_infer(self.params, h, targets.shape[-1])
        tf = teacher_forced_argmax(self.params, h, targets)
        return [float((ar[..., i] != tf[..., i]).mean()) for i in range(targets.shape[-1])]

    def save(self, directory, extra_config: dict | None = None):
        config = {"kind": "pretrainer", "model": self.cfg.to_dict(), **(extra_config or {})}
        nets.save_checkpoint(directory, config, {k: p.data for k, p in self.params.items()})

    @classmethod
    def load(cls, directory) -> "Pretrainer":
        config, arrays = nets.load_checkpoint(directory)
        cfg = ModelConfig.from_dict(config["model"])
        return cls(cfg, {k: ad.Tensor(v, True) for k, v in arrays.items()})


def corpus_scores(patches, sample_rate_hz: float) -> np.ndarray:
    """(S, N) aggregate importance scores for an (S, C, A, P) corpus."""
    x = np.asarray(patches, dtype=np.float64)
    if x.ndim == 3:
        x = x[:, None]
    return np.stack([score_patches(s, sample_rate_hz).score.ravel() for s in x])


def pretrain(corpus, tokenizer: Tokenizer, tcfg: TrainConfig, sample_rate_hz: float = 200.0,
             progress=None) -> tuple[Pretrainer, list[dict]]:
    """Masked HAR pre-training against codes from a frozen tokenizer.

    Masks follow the importance curriculum: the weight on the importance
    score rises linearly from ``tcfg.w0`` to ``tcfg.wmax`` over all steps.
    """
    x = _as_tokens(corpus)
    codes = tokenizer.tokenize(x).codes
    scores = corpus_scores(corpus, sample_rate_hz)
    cfg = tokenizer.cfg
    model = Pretrainer(cfg)
    opt = AdamW(model.params, tcfg)
    data_rng = rng_stream(tcfg.seed, "data")
    mask_rng = rng_stream(tcfg.seed, "masking")
    spe = -(-len(x) // tcfg.batch_size)
    total_steps = tcfg.epochs * spe
    history, step = [], 0
    for epoch in range(tcfg.epochs):
        rows = []
        for idx in batches(len(x), tcfg.batch_size, data_rng):
            w = curriculum_weight(step, max(total_steps - 1, 0), tcfg.w0, tcfg.wmax)
            mask = np.stack([sample_mask(scores[i], cfg.mask_ratio, w, mask_rng, tcfg.tau).as_bool(x.shape[1])
                             for i in idx])
            total, report = model.loss(x[idx], codes[idx], mask)
            if not np.isfinite(report.total):
                raise NonFiniteLoss(f"non-finite HAR loss at step {step}")
            opt.zero_grad()
            total.backward()
            opt.step(lr_at(step, tcfg, spe))
            rows.append(report.flat())
            step += 1
        row = {"epoch": epoch, "steps": step, "lr": lr_at(step - 1, tcfg, spe), "mask_weight": w}
        for key in rows[0]:
            row[key] = float(np.mean([r[key] for r in rows]))
        history.append(row)
        if progress:
            progress(row)
        log.debug("epoch %d: %s", epoch, row)
    return model, history
