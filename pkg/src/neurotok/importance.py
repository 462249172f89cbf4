"""Physiology-aware patch importance and curriculum mask sampling.

Raw metrics per patch: neural band ratio (4-30 Hz power share), artifact
cleanliness (1 - share below 2 Hz or at/above 45 Hz), Hjorth activity,
mobility and complexity, and an irregularity ratio.  Activity is reported
but not part of the aggregate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PatchTooShort, TooFewPatches
from .spectral import psd

EPS = 1e-8
METRICS = ("neural", "clean", "complexity", "irreg", "mobility")
WEIGHTS = (0.30, 0.25, 0.20, 0.15, 0.10)
NEURAL_BAND = (4.0, 30.0)
ARTIFACT_LOW_HZ = 2.0
ARTIFACT_HIGH_HZ = 45.0


def _require_len(x: np.ndarray, n: int = 3):
    if x.shape[-1] < n:
        raise PatchTooShort(f"need at least {n} samples, got {x.shape[-1]}")


def hjorth(patch, eps: float = EPS) -> tuple:
    """(activity, mobility, complexity) along the last axis."""
    x = np.asarray(patch, dtype=np.float64)
    _require_len(x)
    d1 = np.diff(x, axis=-1)
    d2 = np.diff(d1, axis=-1)
    var0, var1, var2 = x.var(axis=-1), d1.var(axis=-1), d2.var(axis=-1)
    activity = np.log(var0 + eps)
    mobility = np.sqrt(var1 / (var0 + eps))
    complexity = np.sqrt(var2 / (var1 + eps)) / (mobility + eps)
    return activity, mobility, complexity


def neural_band_ratio(power, freqs, eps: float = EPS):
    power = np.asarray(power, dtype=np.float64)
    band = (freqs >= NEURAL_BAND[0]) & (freqs < NEURAL_BAND[1])
    return power[..., band].sum(-1) / (power.sum(-1) + eps)


def artifact_penalty(power, freqs, eps: float = EPS):
    """Cleanliness score; 1 means no power in the drift or muscle bands."""
    power = np.asarray(power, dtype=np.float64)
    bad = (freqs < ARTIFACT_LOW_HZ) | (freqs >= ARTIFACT_HIGH_HZ)
    return 1.0 - power[..., bad].sum(-1) / (power.sum(-1) + eps)


def irregularity(patch, eps: float = EPS):
    x = np.asarray(patch, dtype=np.float64)
    _require_len(x)
    d1 = np.diff(x, axis=-1)
    return np.abs(np.diff(np.abs(d1), axis=-1)).mean(-1) / (np.abs(d1).mean(-1) + eps)


def raw_metrics(patches, sample_rate_hz: float) -> dict[str, np.ndarray]:
    """All six raw metrics for a stack of patches (..., P)."""
    power, freqs = psd(patches, sample_rate_hz)
    activity, mobility, complexity = hjorth(patches)
    return {
        "neural": neural_band_ratio(power, freqs),
        "clean": artifact_penalty(power, freqs),
        "complexity": complexity,
        "irreg": irregularity(patches),
        "mobility": mobility,
        "activity": activity,
    }


def minmax(values) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant vector maps to 0.5 everywhere."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    if hi - lo <= 0:
        return np.full_like(v, 0.5)
    return (v - lo) / (hi - lo)


@dataclass
class ImportanceMap:
    raw: dict[str, np.ndarray]
    normalized: dict[str, np.ndarray]
    score: np.ndarray
    shape: tuple[int, ...]


def aggregate_scores(raw: dict[str, np.ndarray], weights=WEIGHTS) -> ImportanceMap:
    """Min-max each metric across the sample's patches, then take the weighted sum."""
    shape = np.shape(raw[METRICS[0]])
    if int(np.prod(shape)) < 2:
        raise TooFewPatches("min-max normalisation needs at least two patches")
    normalized = {m: minmax(np.ravel(raw[m])).reshape(shape) for m in METRICS}
    score = sum(w * normalized[m] for m, w in zip(METRICS, weights))
    return ImportanceMap({k: np.asarray(v) for k, v in raw.items()}, normalized, score, shape)


def score_patches(patches, sample_rate_hz: float, weights=WEIGHTS) -> ImportanceMap:
    """Importance map for one sample; ``patches`` is (C, A, P) or (N, P)."""
    return aggregate_scores(raw_metrics(patches, sample_rate_hz), weights)


def curriculum_weight(step: float, total: float, w0: float = 0.2, wmax: float = 0.7) -> float:
    if total <= 0:
        return wmax
    if not 0 <= step <= total:
        raise ValueError(f"step {step} outside [0, {total}]")
    return w0 + (wmax - w0) * (step / total)


@dataclass
class MaskPlan:
    indices: np.ndarray     # sorted masked token indices
    combined: np.ndarray    # w * S + (1 - w) * U, flattened
    weight: float
    uniform: np.ndarray

    def as_bool(self, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=bool)
        m[self.indices] = True
        return m


def n_masked(mask_ratio: float, n: int) -> int:
    return int(np.floor(mask_ratio * n + 0.5))


def sample_mask(scores, mask_ratio: float, w: float, rng: np.random.Generator, tau: float = 0.8) -> MaskPlan:
    """Draw round(mask_ratio * N) distinct patches with weights proportional to exp(S_hat / tau).

    Sampling without replacement uses the Gumbel-top-k trick on the log weights.
    """
    if not 0 < mask_ratio < 1:
        raise ValueError("mask_ratio must lie in (0, 1)")
    if tau <= 0:
        raise ValueError("temperature must be positive")
    s = np.ravel(getattr(scores, "score", scores)).astype(np.float64)
    u = rng.random(s.size)
    combined = w * s + (1.0 - w) * u
    keys = combined / tau + rng.gumbel(size=s.size)
    k = n_masked(mask_ratio, s.size)
    idx = np.sort(np.argsort(-keys, kind="stable")[:k])
    return MaskPlan(idx, combined, float(w), u)
