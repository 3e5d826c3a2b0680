"""Dense bounded-variable primal simplex with Bland's rule.

Solves ``min c^T x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lower <= x <= upper``
for the small problems that come out of the voltage controller.  Bounds are
handled implicitly (non-basic variables sit at a bound and may flip to the
other one), and both the entering and the leaving variable are chosen by
smallest index, which rules out cycling and makes the result a deterministic
function of the input.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import GridSVCError


class LPError(GridSVCError):
    pass


class InfeasibleError(LPError):
    pass


class UnboundedError(LPError):
    pass


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    objective: float
    iterations: int


def _run(A, b, c, lo, hi, x, basis, tol, max_iter):
    """Simplex iterations from a basic feasible point; mutates ``x`` and ``basis``."""
    n = A.shape[1]
    iterations = 0
    is_basic = np.zeros(n, dtype=bool)
    is_basic[basis] = True
    while True:
        Bm = A[:, basis]
        nonbasic = ~is_basic
        x[basis] = np.linalg.solve(Bm, b - A[:, nonbasic] @ x[nonbasic])
        y = np.linalg.solve(Bm.T, c[basis])
        d = c - A.T @ y

        entering, direction = -1, 0
        for j in np.flatnonzero(nonbasic):
            if d[j] < -tol and x[j] < hi[j] - tol:
                entering, direction = j, 1
                break
            if d[j] > tol and x[j] > lo[j] + tol:
                entering, direction = j, -1
                break
        if entering < 0:
            return iterations

        iterations += 1
        if iterations > max_iter:
            raise LPError(f"simplex did not terminate in {max_iter} iterations")

        alpha = np.linalg.solve(Bm, A[:, entering]) * direction
        # moving x_entering by direction*theta changes x_B by -theta*alpha
        theta = hi[entering] - lo[entering]
        leave_pos, leave_to_upper = -1, False
        for pos in sorted(range(len(basis)), key=lambda p: basis[p]):
            k = basis[pos]
            if alpha[pos] > tol and np.isfinite(lo[k]):
                step, to_upper = (x[k] - lo[k]) / alpha[pos], False
            elif alpha[pos] < -tol and np.isfinite(hi[k]):
                step, to_upper = (hi[k] - x[k]) / -alpha[pos], True
            else:
                continue
            step = max(step, 0.0)
            if step < theta - tol or (leave_pos < 0 and step < theta):
                theta, leave_pos, leave_to_upper = step, pos, to_upper
        if not np.isfinite(theta):
            raise UnboundedError("linear program is unbounded")

        x[entering] += direction * theta
        if leave_pos < 0:
            # bound flip, basis unchanged
            x[entering] = hi[entering] if direction > 0 else lo[entering]
            continue
        leaving = basis[leave_pos]
        x[basis] -= theta * alpha
        x[leaving] = hi[leaving] if leave_to_upper else lo[leaving]
        basis[leave_pos] = entering
        is_basic[leaving] = False
        is_basic[entering] = True


def linprog_bounded(
    c,
    A_ub=None,
    b_ub=None,
    A_eq=None,
    b_eq=None,
    lower=None,
    upper=None,
    tol: float = 1e-9,
    max_iter: int = 50_000,
) -> LPResult:
    c = np.asarray(c, dtype=float)
    nv = c.size
    A_ub = np.zeros((0, nv)) if A_ub is None else np.atleast_2d(np.asarray(A_ub, dtype=float))
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).reshape(-1)
    A_eq = np.zeros((0, nv)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    lo = np.full(nv, -np.inf) if lower is None else np.asarray(lower, dtype=float).copy()
    hi = np.full(nv, np.inf) if upper is None else np.asarray(upper, dtype=float).copy()
    if np.any(lo > hi):
        raise InfeasibleError("lower bound exceeds upper bound")
    if np.any(~np.isfinite(lo) & ~np.isfinite(hi)):
        raise LPError("free variables are not supported")
    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq

    # equality form with slacks for the <= rows
    A = np.zeros((m, nv + m_ub))
    A[:m_ub, :nv] = A_ub
    A[:m_ub, nv:] = np.eye(m_ub)
    A[m_ub:, :nv] = A_eq
    b = np.concatenate([b_ub, b_eq])
    lo = np.concatenate([lo, np.zeros(m_ub)])
    hi = np.concatenate([hi, np.full(m_ub, np.inf)])
    cost = np.concatenate([c, np.zeros(m_ub)])

    x = np.where(np.isfinite(lo), lo, hi)
    x[nv:] = 0.0
    resid = b - A @ x

    # phase 1: slacks start basic where they can, artificials elsewhere
    basis, art_cols = [], []
    for i in range(m):
        if i < m_ub and resid[i] >= 0:
            basis.append(nv + i)
            x[nv + i] = resid[i]
        else:
            col = np.zeros(m)
            col[i] = 1.0 if resid[i] >= 0 else -1.0
            art_cols.append(col)
            basis.append(A.shape[1] + len(art_cols) - 1)
    n_art = len(art_cols)
    if n_art:
        A1 = np.hstack([A, np.column_stack(art_cols)])
        lo1 = np.concatenate([lo, np.zeros(n_art)])
        hi1 = np.concatenate([hi, np.full(n_art, np.inf)])
        x1 = np.concatenate([x, np.zeros(n_art)])
        c1 = np.concatenate([np.zeros(A.shape[1]), np.ones(n_art)])
        it1 = _run(A1, b, c1, lo1, hi1, x1, basis, tol, max_iter)
        if x1[A.shape[1]:].sum() > max(tol, 1e-7) * max(1.0, np.abs(b).max()):
            raise InfeasibleError("linear program is infeasible")
        # artificials are pinned at zero for phase 2
        hi1[A.shape[1]:] = 0.0
        x1[A.shape[1]:] = 0.0
        cost1 = np.concatenate([cost, np.zeros(n_art)])
        it2 = _run(A1, b, cost1, lo1, hi1, x1, basis, tol, max_iter)
        x_full = x1[:nv]
        iterations = it1 + it2
    else:
        iterations = _run(A, b, cost, lo, hi, x, basis, tol, max_iter)
        x_full = x[:nv]

    x_out = np.clip(x_full, lo[:nv], hi[:nv])
    return LPResult(x=x_out, objective=float(c @ x_out), iterations=iterations)
