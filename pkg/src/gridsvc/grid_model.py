"""Linearised Q-V network model, controller sensitivities and the simulated plant.

Buses are partitioned into generator (voltage-controlled), capacitor and load
kinds.  All system-wide vectors and matrices use the ordering
``[generators | capacitors | loads]`` and, inside each kind, area-major order.
Every area also owns one reference (slack) bus whose voltage is held fixed; it
only enters the model through the diagonal of ``B`` and through
``ref_coupling``, which is used to report its reactive output.

The susceptance matrix follows the convention ``B = -Im(Ybus)``: positive
diagonal, off-diagonal entries equal to the series susceptance of the branch
(``-X / (R^2 + X^2)``).  With this convention a positive reactive injection
raises the local voltage.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .exceptions import NetworkError, SingularBlockError, UnknownBusError

if TYPE_CHECKING:
    from .svc_controller import ControlInput

DEFAULT_TIE_IMPEDANCE = complex(0.02, 0.07)
_COND_LIMIT = 1e12
_SYM_TOL = 1e-10


class BusKind(str, enum.Enum):
    GENERATOR = "G"
    CAPACITOR = "C"
    LOAD = "L"


@dataclass(frozen=True)
class BusId:
    area: int
    kind: BusKind
    index: int
    number: int  # printed bus label, e.g. 8 for "bus 8" of area 1


def series_susceptance(z: complex) -> float:
    """Imaginary part of ``1 / z``, i.e. ``-X / (R^2 + X^2)``."""
    r, x = z.real, z.imag
    return -x / (r * r + x * x)


def _as_counts(value: int | Sequence[int], n_areas: int, name: str) -> tuple[int, ...]:
    if isinstance(value, (int, np.integer)):
        counts = (int(value),) * n_areas
    else:
        counts = tuple(int(v) for v in value)
    if len(counts) != n_areas:
        raise NetworkError(f"{name} has {len(counts)} entries for {n_areas} areas")
    if any(c < 0 for c in counts):
        raise NetworkError(f"{name} must be non-negative")
    return counts


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """Multi-area network in the incremental form ``dQ = B dV``.

    ``B`` is the assembled (nG+nC+nL) square matrix; the nine blocks are
    exposed as properties (``B_GG`` ... ``B_LL``).  Base operating-point
    vectors only offset the reported absolute values and default to flat
    values when omitted.
    """

    n_areas: int
    n_gen: tuple[int, ...]
    n_cap: tuple[int, ...]
    n_load: tuple[int, ...]
    B: np.ndarray
    v_ref: np.ndarray
    tie_line_impedance: complex = DEFAULT_TIE_IMPEDANCE
    ref_coupling: np.ndarray | None = None
    v_gen0: np.ndarray | None = None
    q_cap0: np.ndarray | None = None
    q_load0: np.ndarray | None = None
    v_cap0: np.ndarray | None = None
    q_gen0: np.ndarray | None = None
    v_slack: np.ndarray | None = None
    q_slack0: np.ndarray | None = None
    name: str = "network"

    def __post_init__(self) -> None:
        set_ = object.__setattr__
        if self.n_areas < 1:
            raise NetworkError("a network needs at least one area")
        set_(self, "n_gen", _as_counts(self.n_gen, self.n_areas, "n_gen"))
        set_(self, "n_cap", _as_counts(self.n_cap, self.n_areas, "n_cap"))
        set_(self, "n_load", _as_counts(self.n_load, self.n_areas, "n_load"))
        if self.nL < 1:
            raise NetworkError("a network needs at least one load bus")

        n = self.nG + self.nC + self.nL
        B = np.array(self.B, dtype=float)
        if B.shape != (n, n):
            raise NetworkError(f"B has shape {B.shape}, expected {(n, n)}")
        if not np.all(np.isfinite(B)):
            raise NetworkError("B contains non-finite entries")
        if not np.allclose(B, B.T, rtol=0.0, atol=_SYM_TOL * max(1.0, np.abs(B).max())):
            raise NetworkError("assembled susceptance matrix is not symmetric")
        B.setflags(write=False)
        set_(self, "B", B)

        def vec(value, size, default, label):
            arr = np.full(size, default, dtype=float) if value is None else np.array(value, dtype=float).reshape(-1)
            if arr.shape != (size,):
                raise NetworkError(f"{label} has length {arr.size}, expected {size}")
            arr.setflags(write=False)
            return arr

        set_(self, "v_ref", vec(self.v_ref, self.nL, 1.0, "v_ref"))
        set_(self, "v_gen0", vec(self.v_gen0, self.nG, 1.0, "v_gen0"))
        set_(self, "q_cap0", vec(self.q_cap0, self.nC, 0.0, "q_cap0"))
        set_(self, "q_load0", vec(self.q_load0, self.nL, 0.0, "q_load0"))
        set_(self, "v_cap0", vec(self.v_cap0, self.nC, 1.0, "v_cap0"))
        set_(self, "q_gen0", vec(self.q_gen0, self.nG, 0.0, "q_gen0"))
        set_(self, "v_slack", vec(self.v_slack, self.n_areas, 1.0, "v_slack"))
        set_(self, "q_slack0", vec(self.q_slack0, self.n_areas, 0.0, "q_slack0"))
        if np.any(self.v_ref <= 0) or np.any(self.v_gen0 <= 0) or np.any(self.v_cap0 <= 0):
            raise NetworkError("voltages must be strictly positive")

        if self.ref_coupling is None:
            rc = np.zeros((self.n_areas, n))
        else:
            rc = np.array(self.ref_coupling, dtype=float)
        if rc.shape != (self.n_areas, n):
            raise NetworkError(f"ref_coupling has shape {rc.shape}, expected {(self.n_areas, n)}")
        rc.setflags(write=False)
        set_(self, "ref_coupling", rc)

        # invertibility is part of the type's contract
        _ = self._jacobians

    # -- sizes and slices ---------------------------------------------------
    @property
    def nG(self) -> int:
        return sum(self.n_gen)

    @property
    def nC(self) -> int:
        return sum(self.n_cap)

    @property
    def nL(self) -> int:
        return sum(self.n_load)

    @property
    def n_controls(self) -> int:
        return self.nG + self.nC

    def _slice(self, kind: str) -> slice:
        if kind == "G":
            return slice(0, self.nG)
        if kind == "C":
            return slice(self.nG, self.nG + self.nC)
        return slice(self.nG + self.nC, self.nG + self.nC + self.nL)

    def block(self, rows: str, cols: str) -> np.ndarray:
        return self.B[self._slice(rows), self._slice(cols)]

    B_GG = property(lambda self: self.block("G", "G"))
    B_GC = property(lambda self: self.block("G", "C"))
    B_GL = property(lambda self: self.block("G", "L"))
    B_CG = property(lambda self: self.block("C", "G"))
    B_CC = property(lambda self: self.block("C", "C"))
    B_CL = property(lambda self: self.block("C", "L"))
    B_LG = property(lambda self: self.block("L", "G"))
    B_LC = property(lambda self: self.block("L", "C"))
    B_LL = property(lambda self: self.block("L", "L"))

    # -- bus numbering --------------------------------------------------------
    @property
    def buses_per_area(self) -> tuple[int, ...]:
        return tuple(1 + g + c + l for g, c, l in zip(self.n_gen, self.n_cap, self.n_load))

    def _area_offsets(self) -> list[int]:
        offsets, acc = [], 0
        for nb in self.buses_per_area:
            offsets.append(acc)
            acc += nb
        return offsets

    @cached_property
    def buses(self) -> tuple[BusId, ...]:
        """All non-reference buses in system order ``[G | C | L]``.

        Inside an area, bus 1 is the reference bus, followed by capacitors,
        generators and loads (the bundled 9-bus areas use C = 2,3;
        G = 4,5,6; L = 7,8,9).
        """
        offsets = self._area_offsets()
        by_kind: dict[BusKind, list[BusId]] = {k: [] for k in BusKind}
        for a in range(self.n_areas):
            g, c, l = self.n_gen[a], self.n_cap[a], self.n_load[a]
            base = offsets[a] + 1
            numbers = {
                BusKind.CAPACITOR: range(base + 1, base + 1 + c),
                BusKind.GENERATOR: range(base + 1 + c, base + 1 + c + g),
                BusKind.LOAD: range(base + 1 + c + g, base + 1 + c + g + l),
            }
            for kind, rng in numbers.items():
                for num in rng:
                    by_kind[kind].append(BusId(a + 1, kind, len(by_kind[kind]), num))
        return tuple(by_kind[BusKind.GENERATOR] + by_kind[BusKind.CAPACITOR] + by_kind[BusKind.LOAD])

    @property
    def load_buses(self) -> tuple[int, ...]:
        return tuple(b.number for b in self.buses if b.kind is BusKind.LOAD)

    @property
    def slack_buses(self) -> tuple[int, ...]:
        return tuple(off + 1 for off in self._area_offsets())

    def load_index(self, bus_number: int) -> int:
        try:
            return self.load_buses.index(bus_number)
        except ValueError:
            raise UnknownBusError(f"bus {bus_number} is not a load bus") from None

    def load_area(self, index: int) -> int:
        return self.buses[self.nG + self.nC + index].area

    # -- sensitivities -------------------------------------------------------
    @cached_property
    def _jacobians(self) -> tuple[np.ndarray, np.ndarray]:
        return _sensitivity_matrices(self)


def _checked_inverse(M: np.ndarray, label: str) -> np.ndarray:
    if M.size == 0:
        return np.zeros_like(M)
    try:
        cond = np.linalg.cond(M)
        if not np.isfinite(cond) or cond > _COND_LIMIT:
            raise SingularBlockError(label, f"condition number {cond:.3g}")
        return np.linalg.inv(M)
    except np.linalg.LinAlgError as exc:
        raise SingularBlockError(label, str(exc)) from None


def _sensitivity_matrices(net: NetworkModel) -> tuple[np.ndarray, np.ndarray]:
    BCC_inv = _checked_inverse(net.B_CC, "B_CC")
    schur = net.B_LL - net.B_LC @ BCC_inv @ net.B_CL
    J1 = _checked_inverse(schur, "Schur complement B_LL - B_LC B_CC^-1 B_CL")
    # Eliminating dV_C from the capacitor rows of dQ = B dV gives
    # dV_L = J1 dQ_L - J1 [B_LG - B_LC B_CC^-1 B_CG | B_LC B_CC^-1] [dV_G; dQ_C].
    coupling = np.hstack([net.B_LG - net.B_LC @ BCC_inv @ net.B_CG, net.B_LC @ BCC_inv])
    J2 = J1 @ coupling
    J1.setflags(write=False)
    J2.setflags(write=False)
    return J1, J2


@dataclass(frozen=True, eq=False)
class SensitivityModel:
    J1: np.ndarray
    J2: np.ndarray
    pilot_rows: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.pilot_rows:
            raise NetworkError("at least one load bus must be a pilot")
        nL = self.J1.shape[0]
        if self.J1.shape != (nL, nL) or self.J2.shape[0] != nL:
            raise NetworkError("J1 must be square and J2 must have as many rows as J1")
        if any(not 0 <= r < nL for r in self.pilot_rows):
            raise NetworkError(f"pilot rows {self.pilot_rows} out of range for {nL} load buses")

    @property
    def J_p(self) -> np.ndarray:
        return self.J1[list(self.pilot_rows), :]

    @property
    def J2_p(self) -> np.ndarray:
        return self.J2[list(self.pilot_rows), :]


def compute_sensitivities(net: NetworkModel, pilot_rows: Iterable[int]) -> SensitivityModel:
    rows = tuple(sorted(set(int(r) for r in pilot_rows)))
    J1, J2 = net._jacobians
    return SensitivityModel(J1, J2, rows)


def solve_full_system(net: NetworkModel, dq_load: np.ndarray, dv_gen: np.ndarray, dq_cap: np.ndarray) -> np.ndarray:
    """Load-voltage change from a direct solve of the capacitor and load rows of ``dQ = B dV``.

    Independent of the Schur-complement path; used as a cross-check.
    """
    nC, nL = net.nC, net.nL
    rows = np.vstack([
        np.hstack([net.B_CC, net.B_CL]),
        np.hstack([net.B_LC, net.B_LL]),
    ])
    rhs = np.concatenate([
        np.asarray(dq_cap, float) - net.B_CG @ np.asarray(dv_gen, float),
        np.asarray(dq_load, float) - net.B_LG @ np.asarray(dv_gen, float),
    ])
    sol = np.linalg.solve(rows, rhs)
    return sol[nC:nC + nL]


# -- plant -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PlantState:
    V_L: np.ndarray
    V_G: np.ndarray
    Q_C: np.ndarray
    Q_L: np.ndarray
    time: float = 0.0
    load_buses: tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        for name in ("V_L", "V_G", "Q_C", "Q_L"):
            arr = np.array(getattr(self, name), dtype=float).reshape(-1)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.Q_L.shape != self.V_L.shape:
            raise NetworkError("Q_L and V_L must have the same length")
        if np.any(self.V_L <= 0) or np.any(self.V_G <= 0):
            raise NetworkError("voltages must be strictly positive")
        if not self.load_buses:
            object.__setattr__(self, "load_buses", tuple(range(1, self.V_L.size + 1)))
        elif len(self.load_buses) != self.V_L.size:
            raise NetworkError("load_buses must label every load bus")


def initial_state(net: NetworkModel, time: float = 0.0) -> PlantState:
    """Base operating point with every load bus at its reference voltage."""
    return PlantState(
        V_L=net.v_ref.copy(),
        V_G=net.v_gen0.copy(),
        Q_C=net.q_cap0.copy(),
        Q_L=net.q_load0.copy(),
        time=time,
        load_buses=net.load_buses,
    )


def plant_response(net: NetworkModel, state: PlantState, dq_load: np.ndarray, u: "ControlInput") -> PlantState:
    """Advance the plant by one incremental step: ``dV_L = J1 dQ_L - J2 u``.

    ``dq_load`` is the change of reactive *injection* at the load buses (a
    demand increase is a negative injection).  ``u`` is clamped to its box
    before it is applied.
    """
    J1, J2 = net._jacobians
    dq = np.asarray(dq_load, dtype=float).reshape(-1)
    if dq.shape != (net.nL,):
        raise NetworkError(f"dQ_L has length {dq.size}, expected {net.nL}")
    uv = u.clamped().vector
    if uv.shape != (net.n_controls,):
        raise NetworkError(f"control vector has length {uv.size}, expected {net.n_controls}")
    dv = J1 @ dq - J2 @ uv
    return replace(
        state,
        V_L=state.V_L + dv,
        V_G=state.V_G + uv[: net.nG],
        Q_C=state.Q_C + uv[net.nG:],
    )


def apply_load_event(state: PlantState, buses: Iterable[int], factor: float) -> PlantState:
    """Scale the reactive demand at the named load buses by ``factor``."""
    if not factor > 0:
        raise ValueError(f"load factor must be positive, got {factor}")
    q = np.array(state.Q_L)
    for bus in buses:
        try:
            idx = state.load_buses.index(int(bus))
        except ValueError:
            raise UnknownBusError(f"bus {bus} is not a load bus") from None
        q[idx] *= factor
    return replace(state, Q_L=q)


def bus_measurements(net: NetworkModel, state: PlantState) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Per-area ``(bus_numbers, V, Q)`` for every bus, slack included.

    Capacitor voltages, generator and slack reactive outputs are recovered
    from the linear model relative to the base operating point.  ``Q`` is the
    reactive output for sources and the demand for loads.
    """
    dvg = state.V_G - net.v_gen0
    dqc = state.Q_C - net.q_cap0
    dvl = state.V_L - net.v_ref
    if net.nC:
        dvc = np.linalg.solve(net.B_CC, dqc - net.B_CG @ dvg - net.B_CL @ dvl)
    else:
        dvc = np.zeros(0)
    dv_all = np.concatenate([dvg, dvc, dvl])
    qg = net.q_gen0 + net.B[net._slice("G"), :] @ dv_all
    qs = net.q_slack0 + net.ref_coupling @ dv_all
    vc = net.v_cap0 + dvc

    volt = np.concatenate([state.V_G, vc, state.V_L])
    react = np.concatenate([qg, state.Q_C, state.Q_L])
    out = []
    for a in range(net.n_areas):
        idx = [i for i, b in enumerate(net.buses) if b.area == a + 1]
        nums = [net.slack_buses[a]] + [net.buses[i].number for i in idx]
        v = [net.v_slack[a]] + [volt[i] for i in idx]
        q = [qs[a]] + [react[i] for i in idx]
        order = np.argsort(nums)
        out.append((np.asarray(nums)[order], np.asarray(v)[order], np.asarray(q)[order]))
    return out


# -- synthetic networks ---------------------------------------------------------

def build_synthetic_network(
    areas: int,
    n_gen: int,
    n_cap: int,
    n_load: int,
    seed: int,
    tie_impedance: complex = DEFAULT_TIE_IMPEDANCE,
    susceptance_range: tuple[float, float] = (4.0, 12.0),
) -> NetworkModel:
    """Random connected multi-area network with symmetric, diagonally dominant ``B``.

    Each area is a random spanning tree plus a few chords over its buses
    (slack, capacitors, generators, loads); every bus also gets a small
    positive shunt so the reduced matrix is strictly diagonally dominant.
    Consecutive areas are tied load-bus to load-bus (a ring for three or more
    areas) with the series susceptance of ``tie_impedance``.
    """
    if min(areas, n_gen, n_cap, n_load) < 1:
        raise ValueError("all counts must be at least 1")
    rng = np.random.default_rng(seed)
    nb = 1 + n_cap + n_gen + n_load
    nbus = areas * nb
    Bfull = np.zeros((nbus, nbus))
    lo, hi = susceptance_range

    def connect(i: int, j: int, b: float) -> None:
        # b is a series susceptance (negative for inductive branches)
        Bfull[i, j] += b
        Bfull[j, i] += b
        Bfull[i, i] -= b
        Bfull[j, j] -= b

    for a in range(areas):
        base = a * nb
        order = rng.permutation(nb)
        for pos in range(1, nb):
            parent = order[rng.integers(0, pos)]
            connect(base + order[pos], base + parent, -rng.uniform(lo, hi))
        for _ in range(nb // 2):
            i, j = rng.choice(nb, size=2, replace=False)
            connect(base + i, base + j, -rng.uniform(lo, hi))
        for k in range(nb):
            Bfull[base + k, base + k] += rng.uniform(0.1, 0.5)

    b_tie = series_susceptance(tie_impedance)
    ties = [(a, a + 1) for a in range(areas - 1)]
    if areas >= 3:
        ties.append((areas - 1, 0))
    first_load, last_load = 1 + n_cap + n_gen, nb - 1
    for a, b in ties:
        connect(a * nb + last_load, b * nb + first_load, b_tie)

    # system ordering [G | C | L], area-major, slack buses removed
    def local(kind: str) -> range:
        if kind == "C":
            return range(1, 1 + n_cap)
        if kind == "G":
            return range(1 + n_cap, 1 + n_cap + n_gen)
        return range(1 + n_cap + n_gen, nb)

    perm = [a * nb + k for kind in ("G", "C", "L") for a in range(areas) for k in local(kind)]
    slack = [a * nb for a in range(areas)]
    B = Bfull[np.ix_(perm, perm)]
    ref_coupling = Bfull[np.ix_(slack, perm)]

    nG, nC, nL = areas * n_gen, areas * n_cap, areas * n_load
    return NetworkModel(
        n_areas=areas,
        n_gen=n_gen,
        n_cap=n_cap,
        n_load=n_load,
        B=B,
        v_ref=np.ones(nL),
        tie_line_impedance=tie_impedance,
        ref_coupling=ref_coupling,
        v_gen0=rng.uniform(1.0, 1.05, nG),
        q_cap0=rng.uniform(0.1, 0.3, nC),
        q_load0=rng.uniform(0.2, 0.6, nL),
        v_cap0=np.ones(nC),
        q_gen0=rng.uniform(0.1, 0.5, nG),
        v_slack=np.full(areas, 1.02),
        q_slack0=np.full(areas, 0.2),
        name=f"synthetic-{areas}x{nb}-seed{seed}",
    )
