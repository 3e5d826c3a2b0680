"""Morphology singular entropy (MSE) fault indicator.

A window is filtered with flat structuring elements of growing length, the
filtered rows are stacked into a matrix, and the Shannon entropy of its
normalised dominant singular values measures how far the window is from a
single smooth component.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .morphology import StructuringElement, mmf

DEFAULT_THRESHOLD = 0.05
DEFAULT_SCALES = 8
DEFAULT_SELECTION_TOL = 1e-2


@dataclass(frozen=True, eq=False)
class ScaleMatrix:
    H: np.ndarray
    scales: tuple[int, ...]  # SE length used for each row

    @property
    def window_length(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True, eq=False)
class EntropyReport:
    singular_values: np.ndarray
    selected_count: int
    probabilities: np.ndarray
    entropy: float
    threshold: float = DEFAULT_THRESHOLD

    @property
    def alarm(self) -> bool:
        return self.entropy > self.threshold


def scale_lengths(m2: int) -> tuple[int, ...]:
    """Odd SE lengths 1, 3, ..., 2*m2 - 1."""
    return tuple(2 * i + 1 for i in range(m2))


def build_scale_matrix(window, m2: int = DEFAULT_SCALES) -> ScaleMatrix:
    window = np.asarray(window, dtype=float).reshape(-1)
    if m2 < 1:
        raise ValueError("m2 must be at least 1")
    lengths = scale_lengths(m2)
    if window.size < lengths[-1]:
        raise ValueError(f"window of {window.size} samples is shorter than the largest SE ({lengths[-1]})")
    H = np.vstack([mmf(window, StructuringElement.flat(L)) for L in lengths])
    return ScaleMatrix(H, lengths)


def svd_singular_values(A) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    s = np.linalg.svd(A, compute_uv=False)
    return np.sort(np.abs(s))[::-1]


def entropy_from_singulars(
    sigma,
    selection_tol: float = DEFAULT_SELECTION_TOL,
    threshold: float = DEFAULT_THRESHOLD,
) -> EntropyReport:
    """Entropy (nats) of the singular values with ``sigma_j / sigma_1 >= selection_tol``."""
    sigma = np.asarray(sigma, dtype=float).reshape(-1)
    if sigma.size == 0 or not np.any(sigma > 0):
        raise ValueError("need at least one positive singular value")
    if np.any(np.diff(sigma) > 0):
        raise ValueError("singular values must be sorted in descending order")
    m3 = int(np.count_nonzero(sigma / sigma[0] >= selection_tol))
    sel = sigma[:m3]
    p = sel / sel.sum()
    e = float(-np.sum(p * np.log(p))) if m3 > 1 else 0.0
    return EntropyReport(sigma, m3, p, max(e, 0.0) + 0.0, threshold)


def detect(
    window,
    m2: int = DEFAULT_SCALES,
    threshold: float = DEFAULT_THRESHOLD,
    selection_tol: float = DEFAULT_SELECTION_TOL,
) -> EntropyReport:
    H = build_scale_matrix(window, m2).H
    return entropy_from_singulars(svd_singular_values(H), selection_tol, threshold)


def max_entropy(report: EntropyReport) -> float:
    return math.log(report.selected_count)


def detect_rows(
    windows,
    m2: int = DEFAULT_SCALES,
    threshold: float = DEFAULT_THRESHOLD,
    selection_tol: float = DEFAULT_SELECTION_TOL,
) -> list[EntropyReport]:
    """``detect`` applied to every row of a ``signals x w`` block in one batch."""
    W = np.atleast_2d(np.asarray(windows, dtype=float))
    lengths = scale_lengths(m2)
    if W.shape[1] < lengths[-1]:
        raise ValueError(f"window of {W.shape[1]} samples is shorter than the largest SE ({lengths[-1]})")
    H = np.stack([mmf(W, StructuringElement.flat(L)) for L in lengths], axis=1)
    sigma = np.sort(np.abs(np.linalg.svd(H, compute_uv=False)), axis=1)[:, ::-1]
    return [entropy_from_singulars(s, selection_tol, threshold) for s in sigma]
