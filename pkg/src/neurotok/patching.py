"""Split windows into non-overlapping 1-second patches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PatchTooLong


@dataclass(frozen=True)
class PatchGrid:
    """C x A x P patches; the flat token order is channel-major (i = c*A + a)."""

    data: np.ndarray

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def patches_per_channel(self) -> int:
        return self.data.shape[1]

    @property
    def patch_len(self) -> int:
        return self.data.shape[2]

    @property
    def n_tokens(self) -> int:
        return self.n_channels * self.patches_per_channel

    def sequence(self) -> np.ndarray:
        """Flattened (C*A) x P token sequence."""
        return self.data.reshape(-1, self.patch_len)

    def coords(self, i: int) -> tuple[int, int]:
        return divmod(int(i), self.patches_per_channel)

    def index(self, c: int, a: int) -> int:
        return int(c) * self.patches_per_channel + int(a)


def patchify(seg, patch_len: int) -> PatchGrid:
    """Accepts a Segment, a Recording or a raw C x T array."""
    x = np.asarray(getattr(seg, "data", getattr(seg, "samples", seg)))
    if x.ndim == 1:
        x = x[None]
    if patch_len < 1 or patch_len > x.shape[1]:
        raise PatchTooLong(f"patch length {patch_len} exceeds {x.shape[1]} samples")
    a = x.shape[1] // patch_len
    return PatchGrid(np.ascontiguousarray(x[:, :a * patch_len]).reshape(x.shape[0], a, patch_len))


def unpatchify(grid: PatchGrid) -> np.ndarray:
    c, a, p = grid.data.shape
    return grid.data.reshape(c, a * p).copy()
