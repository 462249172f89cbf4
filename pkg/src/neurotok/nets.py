"""Desk-scale patch encoder, transformer stack and reconstruction decoders.

Parameters live in flat ``dict[str, Tensor]`` maps keyed by dotted names,
which is also the layout of the checkpoint manifest.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import IndexOutOfRange, IoFailure, MalformedConfig, ShapeMismatch

# (out_channels, kernel, stride, padding) for the three temporal conv stages
# Normalized patches are ~0.1 in size, so unit-gain conv stages keep GELU in
# its linear range; the stack then becomes nearly linear and the layer norms
# discard amplitude, leaving embeddings too alike for the codebooks to track.
CONV_INIT_GAIN = 8.0
CONV_STAGES = ((8, 15, 8, 7), (8, 3, 1, 1), (8, 3, 1, 1))


@dataclass
class ModelConfig:
    embed_dim: int = 64
    encoder_layers: int = 2
    heads: int = 4
    ffn_dim: int = 256
    decoder_layers: int = 1
    patch_len: int = 200
    rvq_layers: int = 3
    codebook_size: int = 64
    code_dim: int = 16
    mask_ratio: float = 0.5
    max_tokens: int = 640
    ema_decay: float = 0.99
    beta: float = 1.0
    seed: int = 7

    def __post_init__(self):
        if self.embed_dim % self.heads:
            raise MalformedConfig(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.rvq_layers < 1 or self.codebook_size < 2:
            raise MalformedConfig("need rvq_layers >= 1 and codebook_size >= 2")
        if not 0 < self.mask_ratio < 1:
            raise MalformedConfig("mask_ratio must lie in (0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise MalformedConfig(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def conv_out_len(patch_len: int) -> int:
    n = patch_len
    for _, k, s, p in CONV_STAGES:
        n = (n + 2 * p - k) // s + 1
    return n


# parameter initialisation

def _linear(params, rng, name, fan_in, fan_out, bias=True):
    params[f"{name}.w"] = Tensor(rng.normal(0.0, 1.0 / np.sqrt(fan_in), (fan_in, fan_out)), True)
    if bias:
        params[f"{name}.b"] = Tensor(np.zeros(fan_out), True)


def _norm(params, name, dim):
    params[f"{name}.g"] = Tensor(np.ones(dim), True)
    params[f"{name}.b"] = Tensor(np.zeros(dim), True)


def _block(params, rng, name, d, ffn):
    _norm(params, f"{name}.ln1", d)
    _linear(params, rng, f"{name}.qkv", d, 3 * d)
    _linear(params, rng, f"{name}.proj", d, d)
    _norm(params, f"{name}.ln2", d)
    _linear(params, rng, f"{name}.fc1", d, ffn)
    _linear(params, rng, f"{name}.fc2", ffn, d)


def init_encoder(cfg: ModelConfig, rng: np.random.Generator, prefix: str = "enc") -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    c_in = 1
    for i, (c_out, k, _, _) in enumerate(CONV_STAGES):
        std = CONV_INIT_GAIN / np.sqrt(c_in * k)
        params[f"{prefix}.conv{i}.w"] = Tensor(rng.normal(0.0, std, (c_out, c_in, k)), True)
        params[f"{prefix}.conv{i}.b"] = Tensor(np.zeros(c_out), True)
        c_in = c_out
    _linear(params, rng, f"{prefix}.embed", c_in * conv_out_len(cfg.patch_len), cfg.embed_dim)
    params[f"{prefix}.pos"] = Tensor(rng.normal(0.0, 0.02, (cfg.max_tokens, cfg.embed_dim)), True)
    for i in range(cfg.encoder_layers):
        _block(params, rng, f"{prefix}.block{i}", cfg.embed_dim, cfg.ffn_dim)
    _norm(params, f"{prefix}.ln", cfg.embed_dim)
    return params


def init_decoder(cfg: ModelConfig, rng: np.random.Generator, prefix: str, heads: tuple[str, ...]) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    _linear(params, rng, f"{prefix}.inp", cfg.code_dim, cfg.embed_dim)
    params[f"{prefix}.pos"] = Tensor(rng.normal(0.0, 0.02, (cfg.max_tokens, cfg.embed_dim)), True)
    for i in range(cfg.decoder_layers):
        _block(params, rng, f"{prefix}.block{i}", cfg.embed_dim, cfg.ffn_dim)
    _norm(params, f"{prefix}.ln", cfg.embed_dim)
    for head in heads:
        # zero output heads: a large random initial output would send the same
        # "shrink" gradient to every token and collapse the embeddings
        params[f"{prefix}.{head}.w"] = Tensor(np.zeros((cfg.embed_dim, cfg.patch_len)), True)
        params[f"{prefix}.{head}.b"] = Tensor(np.zeros(cfg.patch_len), True)
    return params


def init_tokenizer(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    params = init_encoder(cfg, rng, "enc")
    _linear(params, rng, "proj_time", cfg.embed_dim, cfg.code_dim)
    _linear(params, rng, "proj_freq", cfg.embed_dim, cfg.code_dim)
    params.update(init_decoder(cfg, rng, "dec_time", ("out",)))
    params.update(init_decoder(cfg, rng, "dec_freq", ("amp", "phase")))
    return params


# forward building blocks

def linear(params, name, x: Tensor) -> Tensor:
    y = ad.matmul(x, params[f"{name}.w"])
    b = params.get(f"{name}.b")
    return y if b is None else y + b


def norm(params, name, x: Tensor) -> Tensor:
    return ad.layer_norm(x, params[f"{name}.g"], params[f"{name}.b"])


def attention(params, name, x: Tensor, heads: int) -> Tensor:
    b, n, d = x.shape
    dh = d // heads
    qkv = linear(params, f"{name}.qkv", x).reshape(b, n, 3, heads, dh).transpose(2, 0, 3, 1, 4)
    q, k, v = qkv[0], qkv[1], qkv[2]
    scores = ad.matmul(q, k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(dh))
    ctx = ad.matmul(ad.softmax(scores, axis=-1), v)
    return linear(params, f"{name}.proj", ctx.transpose(0, 2, 1, 3).reshape(b, n, d))


def transformer_block(params, name, x: Tensor, heads: int) -> Tensor:
    """Pre-norm block: x + attn(LN(x)), then x + FFN(LN(x)) with GELU."""
    x = x + attention(params, name, norm(params, f"{name}.ln1", x), heads)
    h = ad.gelu(linear(params, f"{name}.fc1", norm(params, f"{name}.ln2", x)))
    return x + linear(params, f"{name}.fc2", h)


def patch_embed(params, x: Tensor, cfg: ModelConfig, prefix: str = "enc") -> Tensor:
    """(B, N, P) patches -> (B, N, d) via three temporal conv stages and a projection."""
    b, n, p = x.shape
    if p != cfg.patch_len:
        raise ShapeMismatch(f"patch length {p} != configured {cfg.patch_len}")
    h = x.reshape(b * n, 1, p)
    for i, (_, _, stride, pad) in enumerate(CONV_STAGES):
        h = ad.gelu(ad.conv1d(h, params[f"{prefix}.conv{i}.w"], params[f"{prefix}.conv{i}.b"], stride, pad))
    h = h.reshape(b, n, -1)
    return linear(params, f"{prefix}.embed", h)


def _positions(params, name, n: int) -> Tensor:
    table = params[name]
    if n > table.shape[0]:
        raise ShapeMismatch(f"{n} tokens exceed the position table ({table.shape[0]})")
    return table[:n]


def encode_batch(params, x, cfg: ModelConfig, prefix: str = "enc", mask=None, mask_token: Tensor | None = None,
                 use_positions: bool = True) -> Tensor:
    """Encode (B, N, P) patches to (B, N, d).

    ``mask`` is an optional (B, N) boolean array; masked rows of the patch
    embedding are replaced by ``mask_token`` before positions are added.
    """
    x = ad.as_tensor(x)
    h = patch_embed(params, x, cfg, prefix)
    if mask is not None:
        m = np.asarray(mask, dtype=bool)
        if m.shape != x.shape[:2]:
            raise ShapeMismatch(f"mask {m.shape} vs tokens {x.shape[:2]}")
        if mask_token is None:
            raise ValueError("masking needs a mask token")
        mf = m[..., None].astype(float)
        h = h * (1.0 - mf) + ad.mul(mask_token, mf)
    if use_positions:
        h = h + _positions(params, f"{prefix}.pos", x.shape[1])
    for i in range(cfg.encoder_layers):
        h = transformer_block(params, f"{prefix}.block{i}", h, cfg.heads)
    return norm(params, f"{prefix}.ln", h)


def encode(grid, cfg: ModelConfig, params, use_positions: bool = True) -> np.ndarray:
    """N x d embeddings for a single PatchGrid."""
    seq = grid.sequence()[None]
    return encode_batch(params, seq, cfg, use_positions=use_positions).data[0]


def encode_masked(grid, mask, mask_token, cfg: ModelConfig, params, prefix: str = "enc") -> np.ndarray:
    seq = grid.sequence()
    n = seq.shape[0]
    idx = np.asarray(sorted(mask), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexOutOfRange(f"mask index outside [0, {n})")
    m = np.zeros((1, n), dtype=bool)
    m[0, idx] = True
    return encode_batch(params, seq[None], cfg, prefix, mask=m, mask_token=ad.as_tensor(mask_token)).data[0]


def _decoder_trunk(params, prefix, hq: Tensor, cfg: ModelConfig) -> Tensor:
    if hq.shape[-1] != cfg.code_dim:
        raise ShapeMismatch(f"decoder input width {hq.shape[-1]} != code_dim {cfg.code_dim}")
    h = linear(params, f"{prefix}.inp", hq) + _positions(params, f"{prefix}.pos", hq.shape[1])
    for i in range(cfg.decoder_layers):
        h = transformer_block(params, f"{prefix}.block{i}", h, cfg.heads)
    return norm(params, f"{prefix}.ln", h)


def decode_time(params, hq, cfg: ModelConfig) -> Tensor:
    """(B, N, d') quantized codes -> (B, N, P) waveforms."""
    return linear(params, "dec_time.out", _decoder_trunk(params, "dec_time", ad.as_tensor(hq), cfg))


def decode_freq(params, hq, cfg: ModelConfig) -> tuple[Tensor, Tensor]:
    """(B, N, d') -> log-amplitude and phase spectra; phase is tanh-bounded to (-pi, pi)."""
    h = _decoder_trunk(params, "dec_freq", ad.as_tensor(hq), cfg)
    amp = linear(params, "dec_freq.amp", h)
    phase = ad.tanh(linear(params, "dec_freq.phase", h)) * np.pi
    return amp, phase


# checkpoints

def save_checkpoint(directory, config: dict, arrays: dict[str, np.ndarray]) -> None:
    """Write ``manifest.json`` (config + tensor index) and ``tensors.bin`` (little-endian f32)."""
    directory = Path(directory)
    index, offset, chunks = {}, 0, []
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name], dtype="<f4")
        index[name] = {"offset": offset, "shape": list(a.shape)}
        chunks.append(a.tobytes())
        offset += a.size
    try:
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "tensors.bin").write_bytes(b"".join(chunks))
        (directory / "manifest.json").write_text(json.dumps({"config": config, "tensors": index}, indent=1, sort_keys=True))
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint to {directory}: {exc}") from exc


def load_checkpoint(directory) -> tuple[dict, dict[str, np.ndarray]]:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / "manifest.json").read_text())
        payload = np.frombuffer((directory / "tensors.bin").read_bytes(), dtype="<f4")
    except (OSError, ValueError) as exc:
        raise IoFailure(f"cannot read checkpoint {directory}: {exc}") from exc
    arrays = {}
    for name, entry in manifest["tensors"].items():
        size = int(np.prod(entry["shape"]))
        arrays[name] = payload[entry["offset"]:entry["offset"] + size].astype(np.float64).reshape(entry["shape"])
    return manifest["config"], arrays
