"""Filtering, resampling, windowing, rejection and scaling of raw recordings.

The default recipe is 0.3-75 Hz band-pass, 60 Hz notch, resample to
200 Hz, drop the first and last minute, cut 30 s windows, reject any
window whose absolute amplitude exceeds 100 uV, divide by 100 uV.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal

from .errors import InvalidBand, TooShort, WindowTooLong
from .signal_io import Recording

BANDPASS_ORDER = 4
NOTCH_Q = 30.0
RESAMPLE_TAPS_PER_PHASE = 64
KAISER_BETA = 8.6
PAD_PERIODS = 3       # zero-phase pad length, in periods of the band-pass low corner


@dataclass(frozen=True)
class Segment:
    """A fixed-length window cut from a recording.

    ``start`` is the index of the first sample in the source timeline.
    """

    data: np.ndarray
    sample_rate_hz: float
    start: int = 0

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def length_samples(self) -> int:
        return self.data.shape[1]


def _zero_phase(sos: np.ndarray, x: np.ndarray, padlen: int | None = None) -> np.ndarray:
    if padlen is not None:
        padlen = min(padlen, x.shape[-1] - 1)
    return signal.sosfiltfilt(sos, x, axis=-1, padlen=padlen)


def bandpass(rec: Recording, low_hz: float, high_hz: float) -> Recording:
    nyq = rec.sample_rate_hz / 2
    if not (0 < low_hz < high_hz < nyq):
        raise InvalidBand(f"need 0 < low < high < {nyq} Hz, got ({low_hz}, {high_hz})")
    sos = signal.butter(BANDPASS_ORDER, [low_hz, high_hz], btype="bandpass", output="sos", fs=rec.sample_rate_hz)
    # the default pad is a few dozen samples, far shorter than the ringing of a sub-Hz corner
    padlen = int(PAD_PERIODS * rec.sample_rate_hz / low_hz)
    return rec.replace(samples=_zero_phase(sos, np.asarray(rec.samples, dtype=np.float64), padlen))


def notch(rec: Recording, center_hz: float, q: float = NOTCH_Q) -> Recording:
    nyq = rec.sample_rate_hz / 2
    if not (0 < center_hz < nyq):
        raise InvalidBand(f"notch centre must lie in (0, {nyq}) Hz, got {center_hz}")
    b, a = signal.iirnotch(center_hz, q, fs=rec.sample_rate_hz)
    sos = signal.tf2sos(b, a)
    return rec.replace(samples=_zero_phase(sos, np.asarray(rec.samples, dtype=np.float64)))


def resample(rec: Recording, target_hz: float) -> Recording:
    """Polyphase resampling with a Kaiser-windowed sinc anti-alias filter."""
    if target_hz <= 0:
        raise ValueError(f"target rate must be positive, got {target_hz}")
    if target_hz == rec.sample_rate_hz:
        return rec
    ratio = Fraction(target_hz / rec.sample_rate_hz).limit_denominator(10_000)
    up, down = ratio.numerator, ratio.denominator
    n_out = int(round(rec.n_samples * target_hz / rec.sample_rate_hz))
    max_rate = max(up, down)
    taps = signal.firwin(RESAMPLE_TAPS_PER_PHASE * max_rate + 1, 1.0 / max_rate, window=("kaiser", KAISER_BETA))
    out = signal.resample_poly(np.asarray(rec.samples, dtype=np.float64), up, down, axis=-1, window=taps)
    if out.shape[1] < n_out:
        out = np.pad(out, ((0, 0), (0, n_out - out.shape[1])), mode="edge")
    return rec.replace(samples=out[:, :n_out], sample_rate_hz=float(target_hz))


def trim_boundaries(rec: Recording, seconds: float) -> Recording:
    n = int(round(seconds * rec.sample_rate_hz))
    if 2 * n >= rec.n_samples:
        raise TooShort(f"trimming {n} samples from each end leaves nothing of {rec.n_samples}")
    if n == 0:
        return rec
    return rec.replace(samples=rec.samples[:, n:-n])


def window_length(window_s: float, sample_rate_hz: float) -> int:
    n = window_s * sample_rate_hz
    if n < 1 or abs(n - round(n)) > 1e-9:
        raise ValueError(f"window of {window_s} s at {sample_rate_hz} Hz is not a whole number of samples")
    return int(round(n))


def segment_and_reject(rec: Recording, window_s: float, amp_thresh_uv: float) -> list[Segment]:
    """Cut non-overlapping windows and drop any whose peak |x| exceeds the threshold."""
    kept, _ = segment_with_counts(rec, window_s, amp_thresh_uv)
    return kept


def segment_with_counts(rec: Recording, window_s: float, amp_thresh_uv: float) -> tuple[list[Segment], int]:
    n = window_length(window_s, rec.sample_rate_hz)
    if n > rec.n_samples:
        raise WindowTooLong(f"window of {n} samples exceeds recording length {rec.n_samples}")
    kept = []
    total = rec.n_samples // n
    for w in range(total):
        chunk = rec.samples[:, w * n:(w + 1) * n]
        if np.max(np.abs(chunk)) <= amp_thresh_uv:
            kept.append(Segment(np.array(chunk, dtype=np.float64), rec.sample_rate_hz, start=w * n))
    return kept, total - len(kept)


def normalize(seg: Segment, scale_uv: float = 100.0) -> Segment:
    if scale_uv <= 0:
        raise ValueError("scale must be positive")
    return Segment(seg.data / scale_uv, seg.sample_rate_hz, seg.start)


@dataclass(frozen=True)
class PreprocessConfig:
    band: tuple[float, float] = (0.3, 75.0)
    notch_hz: float | None = 60.0
    resample_hz: float = 200.0
    window_s: float = 30.0
    amp_thresh_uv: float = 100.0
    trim_s: float = 60.0
    scale_uv: float = 100.0


def run_pipeline(rec: Recording, cfg: PreprocessConfig = PreprocessConfig()) -> tuple[list[Segment], dict]:
    """Apply the full recipe; returns normalized segments and kept/rejected counts.

    Filtering runs on the whole recording before the boundary trim, so the
    trimmed margins also absorb the filters' edge transients.  The notch is skipped when its centre is at or above the Nyquist rate of
    the input (a 60 Hz notch on a 100 Hz recording has nothing to remove).
    """
    x = bandpass(rec, *cfg.band)
    if cfg.notch_hz and cfg.notch_hz < x.sample_rate_hz / 2:
        x = notch(x, cfg.notch_hz)
    x = trim_boundaries(x, cfg.trim_s)
    x = resample(x, cfg.resample_hz)
    kept, rejected = segment_with_counts(x, cfg.window_s, cfg.amp_thresh_uv)
    segments = [normalize(s, cfg.scale_uv) for s in kept]
    counts = {"windows": len(kept) + rejected, "kept": len(kept), "rejected": rejected}
    return segments, counts
