"""Training-loop plumbing shared by the tokenizer and the pre-trainer."""

from __future__ import annotations

import math
import zlib
from dataclasses import asdict, dataclass, fields

import numpy as np

from .autodiff import Tensor
from .errors import MalformedConfig


def rng_stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named sub-stream ("data", "init", "masking", ...)."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


@dataclass
class TrainConfig:
    epochs: int = 125
    batch_size: int = 16
    lr: float = 1e-4
    weight_decay: float = 0.05
    warmup_epochs: int = 5
    min_lr: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 7
    phase_loss: str = "l2"          # "l2" or "cosine"
    symmetric_loss: bool = True     # accepted for config compatibility; has no effect
    w0: float = 0.2
    wmax: float = 0.7
    tau: float = 0.8

    def __post_init__(self):
        if self.lr <= 0 and self.epochs:
            raise MalformedConfig("lr must be positive")
        if self.warmup_epochs > self.epochs:
            raise MalformedConfig("warmup_epochs cannot exceed epochs")
        if self.phase_loss not in ("l2", "cosine"):
            raise MalformedConfig(f"phase_loss must be 'l2' or 'cosine', got {self.phase_loss!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise MalformedConfig(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def lr_at(step: int, cfg: TrainConfig, steps_per_epoch: int = 1) -> float:
    """Linear warmup from 0 to ``lr``, then cosine decay reaching ``min_lr`` on the last step."""
    warmup = cfg.warmup_epochs * steps_per_epoch
    last = max(cfg.epochs * steps_per_epoch - 1, 0)
    if step < 0:
        raise ValueError("step must be non-negative")
    if warmup > 0 and step <= warmup:
        return cfg.lr * step / warmup
    if last <= warmup:
        return cfg.lr
    progress = min((step - warmup) / (last - warmup), 1.0)
    return cfg.min_lr + (cfg.lr - cfg.min_lr) * 0.5 * (1.0 + math.cos(math.pi * progress))


class AdamW:
    """Adam with decoupled weight decay applied to matrices (ndim >= 2) only."""

    def __init__(self, params: dict[str, Tensor], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float):
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for k, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[k] = c.beta1 * self.m[k] + (1 - c.beta1) * g
            self.v[k] = c.beta2 * self.v[k] + (1 - c.beta2) * g * g
            if lr == 0:
                continue
            update = (self.m[k] / bc1) / (np.sqrt(self.v[k] / bc2) + c.adam_eps)
            if p.data.ndim >= 2:
                update = update + c.weight_decay * p.data
            p.data -= lr * update


def batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]
