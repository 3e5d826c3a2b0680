"""One-dimensional grey-scale morphology with replicate boundaries."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True, eq=False)
class StructuringElement:
    """Odd-length structuring element centred on its middle sample."""

    heights: np.ndarray

    def __post_init__(self) -> None:
        h = np.array(self.heights, dtype=float).reshape(-1)
        if h.size < 1 or h.size % 2 == 0:
            raise ValueError(f"structuring element length must be odd and >= 1, got {h.size}")
        h.setflags(write=False)
        object.__setattr__(self, "heights", h)

    @classmethod
    def flat(cls, length: int) -> "StructuringElement":
        return cls(np.zeros(int(length)))

    @property
    def length(self) -> int:
        return self.heights.size

    @property
    def origin(self) -> int:
        return self.length // 2

    @property
    def is_flat(self) -> bool:
        return not np.any(self.heights)


def _windows(x, g: StructuringElement) -> np.ndarray:
    # sliding windows along the last axis, edges replicated
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ValueError("signal must be non-empty")
    half = g.origin
    if half:
        x = np.concatenate([np.repeat(x[..., :1], half, axis=-1), x, np.repeat(x[..., -1:], half, axis=-1)], axis=-1)
    return sliding_window_view(x, g.length, axis=-1)


def dilate(x, g: StructuringElement) -> np.ndarray:
    """``max_s x(k+s) + g(s)`` over the element's support (last axis)."""
    return np.max(_windows(x, g) + g.heights, axis=-1)


def erode(x, g: StructuringElement) -> np.ndarray:
    """``min_s x(k+s) - g(s)`` over the element's support (last axis)."""
    return np.min(_windows(x, g) - g.heights, axis=-1)


def mmf(x, g: StructuringElement) -> np.ndarray:
    """Morphological median-type filter: mean of dilation and erosion."""
    win = _windows(x, g)
    return 0.5 * (np.max(win + g.heights, axis=-1) + np.min(win - g.heights, axis=-1))
