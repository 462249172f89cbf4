"""Dual-domain RVQ tokenizer: model, joint loss, training loop and checkpoints.

A shared encoder maps each patch to h; two projections feed a temporal and
a frequency RVQ stack.  The temporal decoder reconstructs the waveform, the
frequency decoder reconstructs log(1 + |X|) and the wrapped phase.
Reconstruction gradients cross the quantizer by straight-through; the
codebooks themselves only learn by EMA.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import nets
from .errors import NonFiniteLoss
from .metrics import batch_recon_metrics, codebook_stats
from .nets import ModelConfig
from .optim import AdamW, TrainConfig, batches, lr_at, rng_stream
from .rvq import Quantized, RvqStack, TokenGrid, ema_update, quantize, seed_stack
from .spectral import reconstruction_targets

log = logging.getLogger(__name__)

DOMAINS = ("time", "freq")


@dataclass
class LossReport:
    l_time: float
    l_freq_amp: float
    l_freq_phase: float
    l_commit: float
    l_total: float

    def to_dict(self) -> dict:
        return asdict(self)


def sq_norm(diff: ad.Tensor) -> ad.Tensor:
    """Squared L2 norm over the last axis, averaged over tokens."""
    return ad.mean(ad.sum(ad.square(diff), axis=-1))


class Tokenizer:
    def __init__(self, cfg: ModelConfig, params: dict | None = None, stacks: dict | None = None):
        self.cfg = cfg
        init = rng_stream(cfg.seed, "init")
        self.params = params if params is not None else nets.init_tokenizer(cfg, init)
        self.stacks = stacks if stacks is not None else {
            d: RvqStack.random(cfg.rvq_layers, cfg.codebook_size, cfg.code_dim, init, d, cfg.ema_decay)
            for d in DOMAINS
        }
        self.seeded = stacks is not None

    # forward pieces
    def embed(self, x) -> dict[str, ad.Tensor]:
        """Normalized pre-quantization embeddings per domain, (B, N, d')."""
        h = nets.encode_batch(self.params, x, self.cfg)
        return {d: ad.l2_normalize(nets.linear(self.params, f"proj_{d}", h)) for d in DOMAINS}

    def forward(self, x, frozen: dict | None = None, phase_loss: str = "l2"):
        """Losses for a (B, N, P) batch.

        ``frozen`` maps each domain to a :class:`Quantized` from an earlier
        call; the quantizer is then replaced by the constant offset
        ``quantized - normalize(e)`` taken at that point, which makes the
        forward map smooth and lets finite differences check the
        straight-through gradient.
        """
        x = np.asarray(x, dtype=np.float64)
        emb = self.embed(x)
        quant, hq, commit = {}, {}, 0.0
        for d in DOMAINS:
            en = emb[d]
            if frozen is None:
                q = quantize(self.stacks[d], en.data)
                hq[d] = ad.straight_through(en, q.quantized)
            else:
                q = frozen[d]
                hq[d] = en + (q.quantized - q.residuals[0])
            quant[d] = q
            # encoder-side commitment: r^(l) = en - sum_{k<=l} sg[v_k] = r^(l-1) - sg[v_l]
            prefix = np.cumsum(q.selected, axis=0)
            for layer in range(self.stacks[d].depth):
                r = en - prefix[layer]
                commit = commit + ad.mean(ad.sum(ad.square(r), axis=-1))
        amp_t, phase_t = reconstruction_targets(x)
        y_time = nets.decode_time(self.params, hq["time"], self.cfg)
        y_amp, y_phase = nets.decode_freq(self.params, hq["freq"], self.cfg)
        l_time = sq_norm(y_time - x)
        l_amp = sq_norm(y_amp - amp_t)
        if phase_loss == "cosine":
            l_phase = ad.mean(ad.sum(1.0 - ad.cos(y_phase - phase_t), axis=-1))
        else:
            l_phase = sq_norm(y_phase - phase_t)
        l_commit = commit * self.cfg.beta
        total = l_time + l_amp + l_phase + l_commit
        terms = {"l_time": l_time, "l_freq_amp": l_amp, "l_freq_phase": l_phase, "l_commit": l_commit, "l_total": total}
        outputs = {"time": y_time.data, "amp": y_amp.data, "phase": y_phase.data}
        return terms, quant, outputs

    # inference helpers
    def quantize_batch(self, x) -> dict[str, Quantized]:
        emb = self.embed(x)
        return {d: quantize(self.stacks[d], emb[d].data) for d in DOMAINS}

    def tokenize(self, x, batch_size: int = 32) -> TokenGrid:
        """Codes with shape (B, N, 2, L) for a (B, N, P) array."""
        x = np.asarray(x, dtype=np.float64)
        out = []
        for i in range(0, len(x), batch_size):
            q = self.quantize_batch(x[i:i + batch_size])
            out.append(np.stack([q[d].codes for d in DOMAINS], axis=-2))
        return TokenGrid(np.concatenate(out))

    def reconstruct(self, x, batch_size: int = 32) -> dict[str, np.ndarray]:
        x = np.asarray(x, dtype=np.float64)
        parts = {"time": [], "amp": [], "phase": []}
        for i in range(0, len(x), batch_size):
            _, _, outputs = self.forward(x[i:i + batch_size])
            for k in parts:
                parts[k].append(outputs[k])
        return {k: np.concatenate(v) for k, v in parts.items()}

    def seed_codebooks(self, x, rng: np.random.Generator):
        emb = self.embed(x)
        for d in DOMAINS:
            seed_stack(self.stacks[d], emb[d].data, rng)
        self.seeded = True

    # persistence
    def arrays(self) -> dict[str, np.ndarray]:
        out = {k: p.data for k, p in self.params.items()}
        for d, stack in self.stacks.items():
            for layer, book in enumerate(stack.books):
                out[f"rvq.{d}.{layer}.vectors"] = book.vectors
                out[f"rvq.{d}.{layer}.ema_count"] = book.ema_count
                out[f"rvq.{d}.{layer}.ema_sum"] = book.ema_sum
                out[f"rvq.{d}.{layer}.values"] = book.values
        return out

    def save(self, directory, extra_config: dict | None = None):
        config = {"kind": "tokenizer", "model": self.cfg.to_dict(), **(extra_config or {})}
        nets.save_checkpoint(directory, config, self.arrays())

    @classmethod
    def load(cls, directory) -> "Tokenizer":
        from .rvq import Codebook

        config, arrays = nets.load_checkpoint(directory)
        cfg = ModelConfig.from_dict(config["model"])
        params = {k: ad.Tensor(v, True) for k, v in arrays.items() if not k.startswith("rvq.")}
        stacks = {}
        for d in DOMAINS:
            books = []
            for layer in range(cfg.rvq_layers):
                pre = f"rvq.{d}.{layer}"
                books.append(Codebook(arrays[f"{pre}.vectors"], arrays[f"{pre}.ema_count"].copy(),
                                      arrays[f"{pre}.ema_sum"].copy(), decay=cfg.ema_decay,
                                      values=arrays[f"{pre}.values"].copy()))
            stacks[d] = RvqStack(books, d)
        return cls(cfg, params, stacks)


def tokenizer_step(batch, tok: Tokenizer, opt: AdamW, lr: float, tcfg: TrainConfig):
    """One optimizer step plus EMA codebook updates; returns the LossReport and this batch's codes."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.size == 0:
        raise ValueError("empty batch")
    terms, quant, _ = tok.forward(batch, phase_loss=tcfg.phase_loss)
    report = LossReport(**{k: float(v.data) for k, v in terms.items()})
    if not np.isfinite(report.l_total):
        raise NonFiniteLoss(f"non-finite tokenizer loss: {report}")
    opt.zero_grad()
    terms["l_total"].backward()
    opt.step(lr)
    for d in DOMAINS:
        q = quant[d]
        for layer, book in enumerate(tok.stacks[d].books):
            ema_update(book, q.codes[..., layer], q.residuals[layer])
    return report, {d: quant[d].codes for d in DOMAINS}


def _as_tokens(corpus) -> np.ndarray:
    """(S, C, A, P) or (S, N, P) -> (S, N, P)."""
    x = np.asarray(corpus, dtype=np.float64)
    if x.ndim == 4:
        x = x.reshape(x.shape[0], -1, x.shape[-1])
    if x.ndim != 3 or len(x) == 0:
        raise ValueError(f"corpus must be (S, C, A, P) or (S, N, P), got {x.shape}")
    return x


def train_tokenizer(corpus, mcfg: ModelConfig, tcfg: TrainConfig, progress=None) -> tuple[Tokenizer, list[dict]]:
    """Train from scratch; returns the tokenizer and one history row per epoch."""
    x = _as_tokens(corpus)
    tok = Tokenizer(mcfg)
    opt = AdamW(tok.params, tcfg)
    data_rng = rng_stream(tcfg.seed, "data")
    spe = -(-len(x) // tcfg.batch_size)
    history, step = [], 0
    for epoch in range(tcfg.epochs):
        reports = []
        usage = {d: np.zeros((mcfg.rvq_layers, mcfg.codebook_size), dtype=np.int64) for d in DOMAINS}
        for idx in batches(len(x), tcfg.batch_size, data_rng):
            if not tok.seeded:
                tok.seed_codebooks(x[idx], rng_stream(tcfg.seed, "codebook"))
            report, codes = tokenizer_step(x[idx], tok, opt, lr_at(step, tcfg, spe), tcfg)
            for d in DOMAINS:
                c = codes[d].reshape(-1, mcfg.rvq_layers)
                for layer in range(mcfg.rvq_layers):
                    usage[d][layer] += np.bincount(c[:, layer], minlength=mcfg.codebook_size)
            reports.append(report)
            step += 1
        row = {"epoch": epoch, "steps": step, "lr": lr_at(step - 1, tcfg, spe)}
        for key in LossReport.__dataclass_fields__:
            row[key] = float(np.mean([getattr(r, key) for r in reports]))
        for d in DOMAINS:
            row[f"unused_{d}"] = [int((u == 0).sum()) for u in usage[d]]
        history.append(row)
        if progress:
            progress(row)
        log.debug("epoch %d: %s", epoch, row)
    return tok, history


def codebook_report(tok: Tokenizer, corpus) -> dict[str, list]:
    """Utilisation statistics of every codebook over a corpus."""
    grid = tok.tokenize(_as_tokens(corpus))
    out = {}
    for di, d in enumerate(DOMAINS):
        out[d] = [codebook_stats(grid.codes[..., di, layer].ravel(), tok.cfg.codebook_size).to_dict()
                  for layer in range(tok.cfg.rvq_layers)]
    return out


def reconstruction_report(tok: Tokenizer, corpus) -> dict[str, dict]:
    x = _as_tokens(corpus)
    rec = tok.reconstruct(x)
    amp_t, phase_t = reconstruction_targets(x)
    return {
        "time": batch_recon_metrics(x, rec["time"]),
        "amplitude": batch_recon_metrics(amp_t, rec["amp"]),
        "phase": batch_recon_metrics(phase_t, rec["phase"]),
    }


def rvq_depth_sweep(corpus, depths, mcfg: ModelConfig, tcfg: TrainConfig) -> list[dict]:
    """Train one tokenizer per RVQ depth (same seed and config otherwise) and report time-domain metrics."""
    depths = list(depths)
    if not depths:
        raise ValueError("depths must be non-empty")
    rows = []
    for depth in depths:
        cfg = ModelConfig.from_dict({**mcfg.to_dict(), "rvq_layers": int(depth)})
        tok, history = train_tokenizer(corpus, cfg, tcfg)
        rows.append({"depth": int(depth), **reconstruction_report(tok, corpus)["time"],
                     "final_l_time": history[-1]["l_time"]})
    return rows
