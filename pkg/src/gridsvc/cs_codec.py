"""Compressive-sensing codec: seeded Gaussian measurements over a DCT basis, OMP recovery."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.fft import dct, idct

from .exceptions import CodecError

INF_SNR = math.inf
BASIS_DCT = "DCT"


@dataclass(frozen=True)
class CodecConfig:
    """Codec parameters.

    ``m == n`` is accepted and means an uncompressed pass-through frame
    (identity measurement matrix); any ``m < n`` uses the seeded Gaussian
    matrix.
    """

    n: int
    m: int
    matrix_seed: int = 0
    basis: str = BASIS_DCT
    omp_max_iters: int | None = None
    omp_residual_tol: float = 1e-6

    def __post_init__(self) -> None:
        if self.n < 1 or not 1 <= self.m <= self.n:
            raise CodecError(f"need 1 <= m <= n, got n={self.n}, m={self.m}")
        if self.basis != BASIS_DCT:
            raise CodecError(f"unsupported basis {self.basis!r}")
        if not 0 <= self.matrix_seed < 2**64:
            raise CodecError("matrix_seed must fit in an unsigned 64-bit integer")

    @property
    def passthrough(self) -> bool:
        return self.m == self.n

    @property
    def max_iters(self) -> int:
        return self.m if self.omp_max_iters is None else min(self.omp_max_iters, self.m)

    @classmethod
    def for_ratio(cls, n: int, rho: float, **kw) -> "CodecConfig":
        """Config whose measurement count is ``ceil(n / rho)``."""
        if rho < 1:
            raise CodecError(f"compression ratio must be >= 1, got {rho}")
        return cls(n=n, m=max(1, math.ceil(n / rho - 1e-12)), **kw)


@dataclass(frozen=True, eq=False)
class CompressedFrame:
    y: np.ndarray
    config: CodecConfig
    timestamp: float = 0.0
    area_id: int = 0

    def __post_init__(self) -> None:
        y = np.array(self.y, dtype=float).reshape(-1)
        if y.size != self.config.m:
            raise CodecError(f"frame carries {y.size} measurements, config says m={self.config.m}")
        y.setflags(write=False)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True, eq=False)
class SparseCoefficients:
    theta: np.ndarray
    support: tuple[int, ...]
    residual_norms: tuple[float, ...] = field(default=(), repr=False)


def dct_forward(x) -> np.ndarray:
    return dct(np.asarray(x, dtype=float), type=2, norm="ortho")


def dct_inverse(theta) -> np.ndarray:
    return idct(np.asarray(theta, dtype=float), type=2, norm="ortho")


@lru_cache(maxsize=64)
def _basis(n: int) -> np.ndarray:
    # columns are the DCT basis vectors, so x = Psi @ theta
    psi = idct(np.eye(n), type=2, norm="ortho", axis=0)
    psi.setflags(write=False)
    return psi


@lru_cache(maxsize=64)
def _cached_matrix(n: int, m: int, seed: int) -> np.ndarray:
    if m == n:
        phi = np.eye(n)
    else:
        rng = np.random.default_rng(seed)
        phi = rng.standard_normal((m, n)) / math.sqrt(m)
    phi.setflags(write=False)
    return phi


def gen_measurement_matrix(cfg: CodecConfig) -> np.ndarray:
    """I.i.d. N(0, 1/m) matrix drawn from ``cfg.matrix_seed`` (identity for pass-through)."""
    return _cached_matrix(cfg.n, cfg.m, cfg.matrix_seed).copy()


@lru_cache(maxsize=64)
def _sensing(n: int, m: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    Y = _cached_matrix(n, m, seed) @ _basis(n)
    norms = np.linalg.norm(Y, axis=0)
    Y.setflags(write=False)
    norms.setflags(write=False)
    return Y, norms


def encode(x, cfg: CodecConfig, timestamp: float = 0.0, area_id: int = 0, matrix: np.ndarray | None = None) -> CompressedFrame:
    """``y = Phi x``.  ``matrix`` overrides the seeded matrix (test hook)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != cfg.n:
        raise CodecError(f"signal has length {x.size}, codec expects n={cfg.n}")
    phi = _cached_matrix(cfg.n, cfg.m, cfg.matrix_seed) if matrix is None else np.asarray(matrix, dtype=float)
    if phi.shape != (cfg.m, cfg.n):
        raise CodecError(f"measurement matrix has shape {phi.shape}, expected {(cfg.m, cfg.n)}")
    return CompressedFrame(phi @ x, cfg, timestamp, area_id)


def omp(Y: np.ndarray, y: np.ndarray, max_iters: int, tol: float, col_norms: np.ndarray | None = None) -> SparseCoefficients:
    """Orthogonal matching pursuit on an explicit dictionary ``Y``.

    Atoms are ranked by normalised correlation with the residual; ties go to
    the lowest index.
    """
    m, n = Y.shape
    y = np.asarray(y, dtype=float).reshape(-1)
    if col_norms is None:
        col_norms = np.linalg.norm(Y, axis=0)
    safe = np.where(col_norms > 0, col_norms, np.inf)
    theta = np.zeros(n)
    support: list[int] = []
    limit = min(max_iters, n, m)
    # the active atoms are kept as a thin QR factorisation, grown one column at a time
    Q = np.zeros((m, limit))
    R = np.zeros((limit, limit))
    resid = y.copy()
    rnorm = float(np.linalg.norm(resid))
    history = [rnorm]
    available = np.ones(n, dtype=bool)
    while rnorm >= tol and len(support) < limit:
        score = np.abs(Y.T @ resid) / safe
        score[~available] = -1.0
        j = int(np.argmax(score))
        if score[j] <= 0:
            break
        available[j] = False
        k = len(support)
        a = Y[:, j]
        q = a.copy()
        r = np.zeros(k)
        for _ in range(2):  # second pass restores orthogonality
            proj = Q[:, :k].T @ q
            q -= Q[:, :k] @ proj
            r += proj
        qn = float(np.linalg.norm(q))
        if qn <= 1e-10 * max(col_norms[j], 1e-300):
            continue  # atom already in the span of the support
        Q[:, k] = q / qn
        R[:k, k] = r
        R[k, k] = qn
        support.append(j)
        resid = resid - Q[:, k] * (Q[:, k] @ resid)
        rnorm = min(float(np.linalg.norm(resid)), rnorm)
        history.append(rnorm)
    if support:
        k = len(support)
        coef = np.linalg.solve(R[:k, :k], Q[:, :k].T @ y)
        theta[support] = coef
    return SparseCoefficients(theta, tuple(sorted(support)), tuple(history))


def omp_decode(frame: CompressedFrame, matrix: np.ndarray | None = None) -> SparseCoefficients:
    cfg = frame.config
    if matrix is None:
        Y, norms = _sensing(cfg.n, cfg.m, cfg.matrix_seed)
    else:
        Y, norms = np.asarray(matrix, dtype=float) @ _basis(cfg.n), None
    return omp(Y, frame.y, cfg.max_iters, cfg.omp_residual_tol, norms)


def recover(frame: CompressedFrame, matrix: np.ndarray | None = None) -> np.ndarray:
    cfg = frame.config
    if cfg.passthrough and matrix is None:
        return np.array(frame.y)
    return dct_inverse(omp_decode(frame, matrix).theta)


def compression_ratio(n: float, m: float) -> float:
    if m < 1:
        raise CodecError("m must be at least 1")
    return n / m


def snr(x, x_hat) -> float:
    """Recovery SNR in dB; ``INF_SNR`` for exact recovery."""
    x = np.asarray(x, dtype=float).reshape(-1)
    x_hat = np.asarray(x_hat, dtype=float).reshape(-1)
    ref = np.linalg.norm(x)
    if ref == 0:
        raise CodecError("SNR is undefined for a zero reference signal")
    err = np.linalg.norm(x - x_hat)
    if err == 0:
        return INF_SNR
    return float(-20.0 * math.log10(err / ref))

