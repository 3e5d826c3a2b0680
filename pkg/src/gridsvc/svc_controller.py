"""Central secondary voltage controller.

One control invocation estimates the load change behind the measured pilot
deviations (minimum-norm solution), picks the box-bounded control that
minimises the worst-case load-bus deviation, and refines the result with the
damped pilot-voltage iteration until successive pilot voltages agree within
``epsilon``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import PilotPlacementError
from .grid_model import SensitivityModel
from .simplex import linprog_bounded

EFFORT_WEIGHT = 1e-6  # tie-break weight on |u| in the refinement LP
REFINE_SLACK = 1e-9  # relative inf-norm loss the refinement may accept (simplex tolerance)


@dataclass(frozen=True, eq=False)
class ControlInput:
    """Stacked control ``[dV_G ; dQ_C]`` with per-entry box bounds."""

    dV_G: np.ndarray
    dQ_C: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self) -> None:
        for name in ("dV_G", "dQ_C", "lower", "upper"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.dV_G.size + self.dQ_C.size
        if self.lower.size != n or self.upper.size != n:
            raise ValueError(f"bounds must have length {n}")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @classmethod
    def from_vector(cls, u, n_gen: int, lower, upper) -> "ControlInput":
        u = np.asarray(u, dtype=float).reshape(-1)
        return cls(u[:n_gen], u[n_gen:], lower, upper)

    @classmethod
    def zeros(cls, n_gen: int, n_cap: int, v_step: float = 0.05, q_step: float = 0.2) -> "ControlInput":
        lower = np.concatenate([np.full(n_gen, -v_step), np.full(n_cap, -q_step)])
        return cls(np.zeros(n_gen), np.zeros(n_cap), lower, -lower)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.dV_G, self.dQ_C])

    @property
    def n_gen(self) -> int:
        return self.dV_G.size

    def with_values(self, u) -> "ControlInput":
        return ControlInput.from_vector(u, self.n_gen, self.lower, self.upper)

    def clamped(self) -> "ControlInput":
        return self.with_values(np.clip(self.vector, self.lower, self.upper))

    def is_feasible(self) -> bool:
        v = self.vector
        return bool(np.all(v >= self.lower) and np.all(v <= self.upper))


@dataclass(frozen=True)
class ControllerConfig:
    beta: float = 0.5
    epsilon: float = 0.001
    max_iterations: int = 50

    def __post_init__(self) -> None:
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True, eq=False)
class ControlResult:
    u_star: ControlInput
    iterations: int
    final_deviation: np.ndarray
    x_rms: float
    converged: bool
    last_step: float = math.nan
    history: tuple[float, ...] = field(default=(), repr=False)


def estimate_load_change(J_p: np.ndarray, dV_p: np.ndarray, rcond: float = 1e-12) -> np.ndarray:
    """Minimum-norm load change consistent with the pilot deviations."""
    J_p = np.atleast_2d(np.asarray(J_p, dtype=float))
    dV_p = np.asarray(dV_p, dtype=float).reshape(-1)
    if J_p.shape[0] != dV_p.size:
        raise ValueError(f"J_p has {J_p.shape[0]} rows but {dV_p.size} pilot deviations were given")
    gram = J_p @ J_p.T
    s = np.linalg.svd(gram, compute_uv=False)
    if s.size == 0 or s[-1] <= rcond * max(s[0], np.finfo(float).tiny):
        raise PilotPlacementError("J_p J_p^T is rank deficient; pilot placement is degenerate")
    return J_p.T @ np.linalg.solve(gram, dV_p)


def solve_inf_norm(j1_dq: np.ndarray, J2: np.ndarray, bounds: ControlInput, refine: bool = True) -> ControlInput:
    """Box-bounded ``u`` minimising ``max |j1_dq - J2 u|`` (epigraph LP).

    With ``refine`` a second LP picks, among the inf-norm minimisers, one with
    the smallest total absolute residual, breaking remaining ties (controls in
    the null space of ``J2``) towards the smallest control effort.
    """
    r = np.asarray(j1_dq, dtype=float).reshape(-1)
    J2 = np.atleast_2d(np.asarray(J2, dtype=float))
    nl, p = J2.shape
    if r.size != nl or bounds.lower.size != p:
        raise ValueError("dimensions of J1*dQ, J2 and the control bounds do not conform")
    if not np.any(r) and np.all(bounds.lower <= 0) and np.all(bounds.upper >= 0):
        return bounds.with_values(np.zeros(p))  # u = 0 is optimal in both stages
    # work in units of max|r| so the simplex tolerances are relative
    scale = float(np.max(np.abs(r))) or 1.0
    rs, lo, hi = r / scale, bounds.lower / scale, bounds.upper / scale

    # variables [u, t]:  -J2 u - t <= -r   and   J2 u - t <= r
    ones = np.ones((nl, 1))
    A_ub = np.vstack([np.hstack([-J2, -ones]), np.hstack([J2, -ones])])
    b_ub = np.concatenate([-rs, rs])
    c = np.zeros(p + 1)
    c[-1] = 1.0
    res = linprog_bounded(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        lower=np.concatenate([lo, [0.0]]),
        upper=np.concatenate([hi, [np.inf]]),
    )
    u = np.clip(res.x[:p], lo, hi)
    if refine:
        cap = inf_norm_objective(rs, J2, u) + REFINE_SLACK
        # variables [u, s, w]: |r - J2 u| <= s <= cap, |u| <= w,
        # minimise sum(s) + EFFORT_WEIGHT * sum(w)
        eye_l, eye_p = np.eye(nl), np.eye(p)
        zl, zp = np.zeros((nl, p)), np.zeros((p, nl))
        A2 = np.vstack([
            np.hstack([-J2, -eye_l, zl]),
            np.hstack([J2, -eye_l, zl]),
            np.hstack([eye_p, zp, -eye_p]),
            np.hstack([-eye_p, zp, -eye_p]),
        ])
        res2 = linprog_bounded(
            np.concatenate([np.zeros(p), np.ones(nl), np.full(p, EFFORT_WEIGHT)]),
            A_ub=A2,
            b_ub=np.concatenate([b_ub, np.zeros(2 * p)]),
            lower=np.concatenate([lo, np.zeros(nl), np.zeros(p)]),
            upper=np.concatenate([hi, np.full(nl, cap), np.maximum(np.abs(lo), np.abs(hi))]),
        )
        u2 = np.clip(res2.x[:p], lo, hi)
        if inf_norm_objective(rs, J2, u2) <= cap + REFINE_SLACK:
            u = u2
    u = np.clip(u * scale, bounds.lower, bounds.upper)
    return bounds.with_values(u)


def inf_norm_objective(j1_dq: np.ndarray, J2: np.ndarray, u: ControlInput | np.ndarray) -> float:
    uv = u.vector if isinstance(u, ControlInput) else np.asarray(u, dtype=float)
    return float(np.max(np.abs(np.asarray(j1_dq) - np.asarray(J2) @ uv), initial=0.0))


def rms_deviation(V_L, V_L_ref) -> float:
    V_L = np.asarray(V_L, dtype=float).reshape(-1)
    V_L_ref = np.asarray(V_L_ref, dtype=float).reshape(-1)
    if V_L.size != V_L_ref.size:
        raise ValueError(f"length mismatch: {V_L.size} voltages vs {V_L_ref.size} references")
    if V_L.size == 0:
        raise ValueError("need at least one load bus")
    return float(np.sqrt(np.mean((V_L - V_L_ref) ** 2)))


def run_control_loop(
    sens: SensitivityModel,
    V_p,
    V_p_ref,
    bounds: ControlInput,
    cfg: ControllerConfig = ControllerConfig(),
) -> ControlResult:
    """Iterate estimate -> inf-norm solve -> predicted response -> damped pilot update.

    Each pass computes an incremental control from the current (virtual)
    pilot deviation within the unused part of the box, predicts the load-bus
    deviation it leaves, and moves the pilot voltages a fraction ``beta`` of
    the way to that prediction.  The same fraction of the increment is added
    to the accumulated control, so the virtual pilots always equal the
    model response to the accumulated control.  The loop stops once the
    inf-norm of the pilot-voltage step drops below ``epsilon``.
    """
    V_p = np.asarray(V_p, dtype=float).reshape(-1)
    V_p_ref = np.asarray(V_p_ref, dtype=float).reshape(-1)
    pilots = list(sens.pilot_rows)
    if V_p.size != len(pilots) or V_p_ref.size != len(pilots):
        raise ValueError(f"expected {len(pilots)} pilot voltages")
    J_p = sens.J_p

    dq0 = estimate_load_change(J_p, V_p - V_p_ref)
    total = np.zeros(bounds.lower.size)
    vp = V_p.copy()
    converged = False
    step = math.inf
    steps: list[float] = []
    k = 0
    for k in range(1, cfg.max_iterations + 1):
        dq = estimate_load_change(J_p, vp - V_p_ref)
        r = sens.J1 @ dq
        remaining = ControlInput.from_vector(
            np.zeros_like(total), bounds.n_gen, bounds.lower - total, bounds.upper - total
        )
        u = solve_inf_norm(r, sens.J2, remaining).vector
        predicted = r - sens.J2 @ u
        vp_next = vp + cfg.beta * (V_p_ref + predicted[pilots] - vp)
        total = np.clip(total + cfg.beta * u, bounds.lower, bounds.upper)
        step = float(np.max(np.abs(vp_next - vp), initial=0.0))
        steps.append(step)
        vp = vp_next
        if step < cfg.epsilon:
            converged = True
            break

    final = sens.J1 @ dq0 - sens.J2 @ total
    return ControlResult(
        u_star=bounds.with_values(total),
        iterations=k,
        final_deviation=final,
        x_rms=rms_deviation(final, np.zeros_like(final)),
        converged=converged,
        last_step=step,
        history=tuple(steps),
    )
