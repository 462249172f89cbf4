"""Independent reference implementations written with explicit loops.

They deliberately avoid the library's vectorised code paths (no numpy FFT,
no ``np.var``/``np.diff``) so agreement is meaningful.
"""

from __future__ import annotations

import cmath
import math

EPS = 1e-8


def direct_dft(x):
    n = len(x)
    return [sum(x[j] * cmath.exp(-2j * math.pi * k * j / n) for j in range(n)) for k in range(n)]


def _mean(v):
    return sum(v) / len(v)


def _var(v):
    m = _mean(v)
    return sum((a - m) ** 2 for a in v) / len(v)


def _diff(v):
    return [v[i + 1] - v[i] for i in range(len(v) - 1)]


def hjorth(x):
    d1 = _diff(x)
    d2 = _diff(d1)
    v0, v1, v2 = _var(x), _var(d1), _var(d2)
    mobility = math.sqrt(v1 / (v0 + EPS))
    complexity = math.sqrt(v2 / (v1 + EPS)) / (mobility + EPS)
    return math.log(v0 + EPS), mobility, complexity


def one_sided_power(x, rate):
    spec = direct_dft(x)
    n = len(x)
    return [abs(spec[k]) ** 2 for k in range(n // 2 + 1)], [k * rate / n for k in range(n // 2 + 1)]


def neural_band_ratio(x, rate):
    power, freqs = one_sided_power(x, rate)
    return sum(p for p, f in zip(power, freqs) if 4.0 <= f < 30.0) / (sum(power) + EPS)


def artifact_penalty(x, rate):
    power, freqs = one_sided_power(x, rate)
    return 1.0 - sum(p for p, f in zip(power, freqs) if f < 2.0 or f >= 45.0) / (sum(power) + EPS)


def irregularity(x):
    d1 = _diff(x)
    return _mean([abs(a) for a in _diff([abs(v) for v in d1])]) / (_mean([abs(v) for v in d1]) + EPS)
