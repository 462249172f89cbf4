"""Per-patch DFT and the quantities derived from it.

All functions operate along the last axis so they accept one patch or a
whole stack of them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AsymmetricSpectrum


@dataclass(frozen=True)
class Spectrum:
    real: np.ndarray
    imag: np.ndarray

    @property
    def size(self) -> int:
        return self.real.shape[-1]

    def complex(self) -> np.ndarray:
        return self.real + 1j * self.imag


def dft(patch) -> Spectrum:
    """X[k] = sum_n x[n] exp(-2j pi k n / P), unnormalized, full length P."""
    x = np.asarray(patch, dtype=np.float64)
    spec = np.fft.fft(x, axis=-1)
    return Spectrum(spec.real.copy(), spec.imag.copy())


def idft(spec: Spectrum, tol: float = 1e-6) -> np.ndarray:
    z = spec.complex()
    mirrored = np.conj(np.roll(z[..., ::-1], 1, axis=-1))
    scale = max(1.0, float(np.max(np.abs(z)))) if z.size else 1.0
    if np.max(np.abs(z - mirrored), initial=0.0) > tol * scale:
        raise AsymmetricSpectrum("spectrum is not conjugate-symmetric; inverse would be complex")
    return np.fft.ifft(z, axis=-1).real


def amplitude_phase(spec: Spectrum) -> tuple[np.ndarray, np.ndarray]:
    """Magnitude and phase; phase lies in (-pi, pi] (atan2 with -pi folded onto pi)."""
    amp = np.hypot(spec.real, spec.imag)
    phase = np.arctan2(spec.imag, spec.real)
    phase = np.where(phase <= -np.pi, np.pi, phase)
    return amp, phase


def psd(patch, sample_rate_hz: float) -> tuple[np.ndarray, np.ndarray]:
    """One-sided |X[k]|^2 for k = 0..floor(P/2) and the matching bin frequencies."""
    x = np.asarray(patch, dtype=np.float64)
    p = x.shape[-1]
    if p < 2:
        raise ValueError("PSD needs at least two samples")
    spec = np.fft.rfft(x, axis=-1)
    power = spec.real ** 2 + spec.imag ** 2
    freqs = np.arange(p // 2 + 1) * sample_rate_hz / p
    return power, freqs


def reconstruction_targets(patches) -> tuple[np.ndarray, np.ndarray]:
    """log(1 + amplitude) and wrapped phase, the frequency-branch regression targets."""
    amp, phase = amplitude_phase(dft(patches))
    return np.log1p(amp), phase
