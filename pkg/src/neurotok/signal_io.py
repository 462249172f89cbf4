"""Recording container and its on-disk formats.

Binary layout (little-endian)::

    8 bytes   magic b"NRTK0001"
    u32       C (channels)
    u32       T (samples per channel)
    f64       sample rate in Hz
    C*T f32   samples, channel-major

CSV holds one channel per row with no header; the sample rate is passed
by the caller.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyRecording, IoFailure, MalformedHeader, NonFinite

MAGIC = b"NRTK0001"
_HEADER = struct.Struct("<8sIId")


@dataclass(frozen=True)
class Recording:
    """Multi-channel signal, amplitudes in microvolts (or dimensionless once normalized)."""

    samples: np.ndarray
    sample_rate_hz: float
    channel_labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        samples = np.asarray(self.samples)
        if samples.ndim != 2 or samples.shape[0] == 0 or samples.shape[1] == 0:
            raise EmptyRecording(f"expected a non-empty C x T matrix, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise NonFinite("recording contains NaN or Inf samples")
        if not (self.sample_rate_hz > 0 and np.isfinite(self.sample_rate_hz)):
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        labels = list(self.channel_labels) or [f"ch{i}" for i in range(samples.shape[0])]
        if len(labels) != samples.shape[0]:
            raise ValueError(f"{len(labels)} labels for {samples.shape[0]} channels")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))
        object.__setattr__(self, "channel_labels", labels)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def replace(self, samples: np.ndarray | None = None, sample_rate_hz: float | None = None) -> "Recording":
        return Recording(
            self.samples if samples is None else samples,
            self.sample_rate_hz if sample_rate_hz is None else sample_rate_hz,
            self.channel_labels,
        )


def save_recording(rec: Recording, path) -> None:
    """Write ``rec`` in the binary container; samples are stored as float32."""
    c, t = rec.samples.shape
    payload = np.ascontiguousarray(rec.samples, dtype="<f4").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, c, t, rec.sample_rate_hz))
            fh.write(payload)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _load_bin(path) -> Recording:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if len(raw) < _HEADER.size:
        raise MalformedHeader(f"{path}: file shorter than header")
    magic, c, t, rate = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise MalformedHeader(f"{path}: bad magic {magic!r}")
    if c == 0 or t == 0:
        raise EmptyRecording(f"{path}: declared dims ({c}, {t})")
    expected = _HEADER.size + 4 * c * t
    if len(raw) != expected:
        raise MalformedHeader(f"{path}: payload is {len(raw) - _HEADER.size} bytes, dims ({c}, {t}) need {4 * c * t}")
    samples = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(c, t).astype(np.float32)
    return Recording(samples, rate)


def _load_csv(path, sample_rate_hz: float) -> Recording:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    rows = [line for line in text.splitlines() if line.strip()]
    if not rows:
        raise EmptyRecording(f"{path}: no rows")
    try:
        data = [[float(v) for v in row.split(",")] for row in rows]
    except ValueError as exc:
        raise MalformedHeader(f"{path}: {exc}") from exc
    if len({len(r) for r in data}) != 1:
        raise MalformedHeader(f"{path}: ragged rows")
    return Recording(np.array(data, dtype=np.float64), sample_rate_hz)


def load_recording(path, format: str | None = None, sample_rate_hz: float | None = None) -> Recording:
    """Load a recording; ``format`` is ``"bin"`` or ``"csv"`` (guessed from the suffix if omitted)."""
    fmt = format or ("csv" if str(path).lower().endswith(".csv") else "bin")
    if fmt == "bin":
        return _load_bin(path)
    if fmt == "csv":
        if sample_rate_hz is None:
            raise ValueError("CSV import needs sample_rate_hz")
        return _load_csv(path, sample_rate_hz)
    raise ValueError(f"unknown format {fmt!r}")
