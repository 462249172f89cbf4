"""Codebook utilisation, reconstruction fidelity and mask-distribution reports."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConstantSignal, ShapeMismatch

SNR_CAP_DB = 120.0


@dataclass
class CodebookStats:
    histogram: list[int]
    total: int
    unused_count: int
    normalized_entropy: float
    gini: float
    top10_contribution: float

    def to_dict(self) -> dict:
        return asdict(self)


def codebook_stats(assignments, k: int | None = None, counts: bool = False) -> CodebookStats:
    """Usage statistics for one codebook.

    ``assignments`` are code indices, or a length-K histogram when ``counts`` is true.
    The Gini coefficient is sum_i (2i - K - 1) p_(i) / K over ascending frequencies.
    """
    if counts:
        hist = np.asarray(assignments, dtype=np.int64)
        k = hist.size if k is None else k
    else:
        if k is None:
            raise ValueError("codebook size is required for raw assignments")
        hist = np.bincount(np.asarray(assignments, dtype=np.int64).ravel(), minlength=k)
    if k < 2 or hist.size != k:
        raise ValueError(f"need K >= 2 and a length-K histogram (K={k}, got {hist.size})")
    total = int(hist.sum())
    p = hist / total if total else np.full(k, 1.0 / k)
    nz = p[p > 0]
    entropy = float(-(nz * np.log(nz)).sum() / math.log(k))
    ranks = np.arange(1, k + 1)
    gini = float(((2 * ranks - k - 1) * np.sort(p)).sum() / k)
    top = math.ceil(k / 10)
    top10 = float(np.sort(p)[::-1][:top].sum())
    return CodebookStats(hist.tolist(), total, int((hist == 0).sum()), entropy, gini, top10)


def snr_db(original, reconstructed) -> float:
    x = np.asarray(original, dtype=np.float64)
    err = ((x - np.asarray(reconstructed, dtype=np.float64)) ** 2).sum()
    if err == 0:
        return SNR_CAP_DB
    return float(min(SNR_CAP_DB, 10.0 * math.log10((x ** 2).sum() / err)))


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a0, b0 = a - a.mean(), b - b.mean()
    den = math.sqrt((a0 ** 2).sum() * (b0 ** 2).sum())
    if den == 0:
        raise ConstantSignal("correlation undefined for a constant signal")
    return float(np.clip((a0 * b0).sum() / den, -1.0, 1.0))


def recon_metrics(original, reconstructed) -> tuple[float, float, float]:
    """(mse, pearson r, snr in dB) for one pair of equal-length vectors."""
    x = np.asarray(original, dtype=np.float64).ravel()
    y = np.asarray(reconstructed, dtype=np.float64).ravel()
    if x.shape != y.shape or x.size < 2:
        raise ShapeMismatch("reconstruction metrics need equal-length vectors of length >= 2")
    return float(((x - y) ** 2).mean()), pearson(x, y), snr_db(x, y)


def batch_recon_metrics(original, reconstructed) -> dict[str, float]:
    """Per-patch metrics averaged over the leading axes; constant patches are left out of r."""
    x = np.asarray(original, dtype=np.float64)
    y = np.asarray(reconstructed, dtype=np.float64)
    x2 = x.reshape(-1, x.shape[-1])
    y2 = y.reshape(-1, y.shape[-1])
    mses, rs, snrs = [], [], []
    for a, b in zip(x2, y2):
        mses.append(((a - b) ** 2).mean())
        snrs.append(snr_db(a, b))
        try:
            rs.append(pearson(a, b))
        except ConstantSignal:
            pass
    return {
        "mse": float(np.mean(mses)),
        "pearson_r": float(np.mean(rs)) if rs else float("nan"),
        "snr_db": float(np.mean(snrs)),
    }


def mask_report(scores, masked) -> dict[str, float]:
    """Mean importance of masked vs visible patches.

    ``masked`` is a boolean mask or an index array over the flattened scores.
    """
    s = np.ravel(getattr(scores, "score", scores)).astype(np.float64)
    m = np.asarray(getattr(masked, "indices", masked))
    if m.dtype != bool:
        b = np.zeros(s.size, dtype=bool)
        b[m] = True
        m = b
    m = m.ravel()
    mean_masked = float(s[m].mean()) if m.any() else float("nan")
    mean_visible = float(s[~m].mean()) if (~m).any() else float("nan")
    gap = mean_masked - mean_visible
    rel = gap / mean_visible if mean_visible else float("nan")
    return {"mean_masked": mean_masked, "mean_visible": mean_visible, "gap": gap, "relative_increase": rel}


def __getattr__(name):
    # the depth sweep trains tokenizers, so it lives with the trainer; import lazily to avoid a cycle
    if name == "rvq_depth_sweep":
        from .tokenizer import rvq_depth_sweep
        return rvq_depth_sweep
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
