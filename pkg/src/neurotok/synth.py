"""Deterministic synthetic EEG-like recordings with planted informative patches.

Each source is slow drift, a 1/f background and low-level sensor noise,
and every channel blends its own source with one shared by all channels.
On a 1-second patch grid some patches receive a Hann-tapered 4-30 Hz
oscillation burst (the ground-truth "informative" patches), some a tapered
high-frequency muscle-like tone, and spikes are scattered at
``spike_density`` events per channel-second.  Peak amplitudes stay below
100 uV so nothing is rejected by the default amplitude threshold.
"""

from __future__ import annotations

import numpy as np

from .signal_io import Recording

RATE_HZ = 200.0
PATCH_S = 1.0
NOISE_UV = 0.5
BACKGROUND_UV = 10.0
BURST_PROB = 0.3
MUSCLE_PROB = 0.1
SHARED_VARIANCE = 0.5   # fraction of each channel drawn from a source common to all channels


def _pink(rng: np.random.Generator, n: int, rate: float) -> np.ndarray:
    """Unit-variance 1/f background noise."""
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / rate)
    spec[0] = 0.0
    spec[1:] /= np.sqrt(f[1:])
    pink = np.fft.irfft(spec, n)
    return pink / pink.std()


def _channel_signals(rng: np.random.Generator, channels: int, n_samples: int, rate: float,
                     spike_density: float, burst_prob: float = BURST_PROB):
    t = np.arange(n_samples) / rate
    p = int(round(PATCH_S * rate))
    n_patches = n_samples // p
    x = np.zeros((channels, n_samples))
    informative = np.zeros((channels, n_patches), dtype=bool)
    taper = np.hanning(p)
    for c in range(channels):
        for _ in range(2):
            f = rng.uniform(0.05, 0.5)
            x[c] += rng.uniform(5.0, 12.0) * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
        x[c] += NOISE_UV * rng.standard_normal(n_samples)
        x[c] += BACKGROUND_UV * _pink(rng, n_samples, rate)
        for a in range(n_patches):
            seg = slice(a * p, (a + 1) * p)
            u = rng.random()
            if u < burst_prob:
                f = rng.uniform(5.0, 28.0)
                amp = rng.uniform(15.0, 30.0)
                x[c, seg] += amp * taper * np.sin(2 * np.pi * f * t[:p] + rng.uniform(0, 2 * np.pi))
                informative[c, a] = True
            elif u < burst_prob + MUSCLE_PROB:
                f = rng.uniform(50.0, 70.0)
                x[c, seg] += rng.uniform(4.0, 8.0) * taper * np.sin(2 * np.pi * f * t[:p] + rng.uniform(0, 2 * np.pi))
        n_spikes = rng.poisson(spike_density * n_samples / rate)
        width = 0.02 * rate
        n = np.arange(-int(4 * width), int(4 * width) + 1)
        shape = -(n / width) * np.exp(0.5 - 0.5 * (n / width) ** 2)  # biphasic, unit peak
        for centre in rng.integers(0, n_samples, n_spikes):
            lo, hi = max(centre + n[0], 0), min(centre + n[-1] + 1, n_samples)
            x[c, lo:hi] += rng.uniform(15.0, 25.0) * shape[lo - (centre + n[0]):hi - (centre + n[0])]
    return x, informative


def _mixed_signals(rng: np.random.Generator, channels: int, n_samples: int, rate: float, spike_density: float):
    """Per-channel sources blended with one shared source, as volume conduction would.

    A burst in the shared source marks the patch informative on every channel.
    """
    own, own_info = _channel_signals(rng, channels, n_samples, rate, spike_density)
    shared, shared_info = _channel_signals(rng, 1, n_samples, rate, spike_density)
    x = np.sqrt(1.0 - SHARED_VARIANCE) * own + np.sqrt(SHARED_VARIANCE) * shared
    return x, own_info | shared_info


def generate_recording(seed: int, minutes: float, channels: int, spike_density: float = 0.0,
                       rate: float = RATE_HZ) -> tuple[Recording, list[tuple[int, int]]]:
    """Recording in microvolts plus the (channel, patch) coordinates of planted bursts."""
    rng = np.random.default_rng(seed)
    n_samples = int(round(minutes * 60 * rate))
    x, informative = _mixed_signals(rng, channels, n_samples, rate, spike_density)
    coords = [(int(c), int(a)) for c, a in zip(*np.nonzero(informative))]
    labels = [f"ch{i}" for i in range(channels)]
    return Recording(x.astype(np.float32), rate, labels), coords


def make_corpus(seed: int = 7, n_samples: int = 64, channels: int = 4, seconds: int = 8,
                spike_density: float = 0.05, rate: float = RATE_HZ) -> dict[str, np.ndarray]:
    """Normalized (S, C, A, P) patch tensor plus the (S, C, A) informative-patch mask."""
    rng = np.random.default_rng(seed)
    n = int(round(seconds * rate))
    p = int(round(PATCH_S * rate))
    xs, infos = [], []
    for _ in range(n_samples):
        x, info = _mixed_signals(rng, channels, n, rate, spike_density)
        xs.append(x.reshape(channels, n // p, p) / 100.0)
        infos.append(info)
    return {"patches": np.stack(xs), "informative": np.stack(infos), "sample_rate_hz": rate}
