"""Closed-loop scenario runner and parameter sweeps.

Per sample step: apply due load events and the previous control to the
plant, read every bus (with optional voltage sensor noise), buffer per-area windows,
run the entropy detector on each load-bus voltage window, smooth the newest sample
with the morphological filter, concentrate the areas into one system vector,
compress and ship it over the channel, and run the controller on the
reconstructed pilot voltages.  The resulting control is applied at the next
step.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .cs_codec import CodecConfig, encode, recover, snr
from .exceptions import FixtureError, UnknownBusError
from .fixtures import Scenario
from .grid_model import NetworkModel, apply_load_event, bus_measurements, compute_sensitivities, initial_state, plant_response
from .morphology import StructuringElement, mmf
from .mse_detector import detect_rows
from .svc_controller import ControlInput, rms_deviation, run_control_loop
from .telemetry_comms import AreaBuffer, PredictiveLink, TelemetryWindow, concatenate_areas, correlated_telemetry

CSV_COLUMNS = ("time_s", "area_id", "bus_id", "v_pu", "q_pu", "entropy_nat", "alarm", "rho", "snr_db", "delay_s")
FILTER_LENGTH = 3  # flat SE used to smooth measurements before control


@dataclass(frozen=True)
class AlarmEvent:
    time_s: float
    buses: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class RunReport:
    rows: list[tuple]
    times: np.ndarray
    x_rms: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    delays: np.ndarray
    snr_db: np.ndarray
    alarm_events: tuple[AlarmEvent, ...]
    controls: np.ndarray = field(repr=False)
    rho: float = 1.0

    @property
    def final_x_rms(self) -> float:
        return float(self.x_rms[-1])

    @property
    def mean_delay(self) -> float:
        return float(np.mean(self.delays))

    @property
    def median_snr(self) -> float:
        return float(np.median(self.snr_db))

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))

    def x_rms_at(self, time_s: float) -> float:
        return float(self.x_rms[int(np.argmin(np.abs(self.times - time_s)))])

    def summary(self) -> dict:
        return {
            "final_x_rms": self.final_x_rms,
            "max_iterations": int(self.iterations.max()),
            "all_converged": self.all_converged,
            "mean_delay_s": self.mean_delay,
            "rho": self.rho,
            "median_snr_db": self.median_snr,
            "alarms": len(self.alarm_events),
        }

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        writer.writerows(self.rows)
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.csv_text())
        return path


def _num(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.10g}"


def _pilot_rows(net: NetworkModel, pilot_buses: Sequence[int]) -> list[int]:
    if not pilot_buses:
        return list(range(net.nL))
    try:
        return sorted({net.load_index(b) for b in pilot_buses})
    except UnknownBusError as exc:
        raise FixtureError(f"pilot bus: {exc}") from None


def _check_buses(net: NetworkModel, s: Scenario) -> None:
    all_buses = {b for area in bus_measurements(net, initial_state(net)) for b in area[0]}
    for e in s.events:
        for b in e.buses:
            if b not in net.load_buses:
                raise FixtureError(f"event at {e.time_s} s names bus {b}, which is not a load bus")
    for n in s.sensor_noise:
        for b in n.buses:
            if b not in all_buses:
                raise FixtureError(f"sensor noise names unknown bus {b}")


def _control_box(step_box: ControlInput, state, s: Scenario) -> ControlInput:
    # per-step limits intersected with the absolute setpoint ranges
    lo_abs = np.concatenate([np.full(state.V_G.size, s.v_gen_limits[0]), np.full(state.Q_C.size, s.q_cap_limits[0])])
    hi_abs = np.concatenate([np.full(state.V_G.size, s.v_gen_limits[1]), np.full(state.Q_C.size, s.q_cap_limits[1])])
    current = np.concatenate([state.V_G, state.Q_C])
    lower = np.minimum(np.maximum(step_box.lower, lo_abs - current), 0.0)
    upper = np.maximum(np.minimum(step_box.upper, hi_abs - current), 0.0)
    return ControlInput.from_vector(np.zeros(current.size), step_box.n_gen, lower, upper)


def run_scenario(s: Scenario, net: NetworkModel | None = None) -> RunReport:
    """Simulate ``s`` end to end; identical scenarios give identical reports."""
    net = s.load_network() if net is None else net
    _check_buses(net, s)
    rows_p = _pilot_rows(net, s.pilot_buses)
    sens = compute_sensitivities(net, rows_p)
    v_p_ref = net.v_ref[rows_p]
    step_box = ControlInput.zeros(net.nG, net.nC, s.v_step, s.q_step)
    se = StructuringElement.flat(FILTER_LENGTH)
    det = s.detector
    noise_rng = np.random.default_rng(np.random.SeedSequence([s.rng_seed, 1]))

    state = initial_state(net)
    nominal = bus_measurements(net, state)
    numbers = [area[0] for area in nominal]
    buffers = [AreaBuffer(a + 1, 2 * len(numbers[a]), s.window, s.sample_period_s) for a in range(net.n_areas)]
    x0 = np.concatenate([np.concatenate([v, q]) for _, v, q in nominal])
    # position of each load bus voltage in the concentrated vector
    offsets = np.cumsum([0] + [2 * len(n) for n in numbers])
    v_pos = {}
    for a, nums in enumerate(numbers):
        for j, b in enumerate(nums):
            v_pos[int(b)] = int(offsets[a] + j)
    pilot_pos = [v_pos[net.load_buses[r]] for r in rows_p]
    load_set = set(net.load_buses)

    codec = CodecConfig.for_ratio(x0.size, s.rho, matrix_seed=s.rng_seed)
    link = PredictiveLink(codec, s.channel, x0)

    pending = step_box
    pending_events = list(s.events)
    rows: list[tuple] = []
    times, xr, iters, conv, delays, snrs, controls = [], [], [], [], [], [], []
    alarm_events: list[AlarmEvent] = []
    alarmed_before = False
    rho_text = _num(s.rho)

    for k in range(s.n_steps):
        t = k * s.sample_period_s
        q_before = state.Q_L
        while pending_events and pending_events[0].time_s <= t + 1e-9:
            e = pending_events.pop(0)
            state = apply_load_event(state, e.buses, e.factor)
        dq = -(state.Q_L - q_before)  # demand increase = negative injection
        state = replace(plant_response(net, state, dq, pending), time=t)
        controls.append(pending.clamped().vector)

        meas = bus_measurements(net, state)
        filtered, area_rows, alarmed = [], [], []
        for a, (nums, v, q) in enumerate(meas):
            v, q = v.copy(), q.copy()
            for spec in s.sensor_noise:
                if t + 1e-9 >= spec.start_s:
                    for b in spec.buses:
                        j = int(np.searchsorted(nums, b))
                        if j < len(nums) and nums[j] == b:
                            v[j] += abs(v[j]) * 10 ** (-spec.snr_db / 20) * noise_rng.standard_normal()
            buf = buffers[a]
            buf.push(np.concatenate([v, q]), t)
            win = buf.window()
            smooth = mmf(win.samples, se)[:, -1]
            filtered.append(TelemetryWindow(a + 1, t, smooth, s.sample_period_s))
            # the detector watches load-bus voltages only
            watched = [j for j, b in enumerate(nums) if int(b) in load_set]
            reports = dict(zip(watched, detect_rows(win.samples[watched], det.m2, det.threshold, det.selection_tol)))
            for j, b in enumerate(nums):
                rep = reports.get(j)
                if rep is not None and rep.alarm:
                    alarmed.append(int(b))
                ent = math.nan if rep is None else rep.entropy
                area_rows.append((a + 1, int(b), v[j], q[j], ent, rep is not None and rep.alarm))

        x = concatenate_areas(filtered).samples[:, 0]
        x_hat, delay, _ = link.send(x, t)
        snr_db = snr(x, x_hat)
        bounds = _control_box(step_box, state, s)
        result = run_control_loop(sens, x_hat[pilot_pos], v_p_ref, bounds, s.controller)
        pending = result.u_star

        for area_id, b, v, q, ent, alarm in area_rows:
            rows.append((_num(t), area_id, b, _num(v), _num(q), _num(ent), int(alarm), rho_text, _num(snr_db), _num(delay)))
        if alarmed and not alarmed_before:
            alarm_events.append(AlarmEvent(t, tuple(alarmed)))
        alarmed_before = bool(alarmed)

        times.append(t)
        xr.append(rms_deviation(state.V_L, net.v_ref))
        iters.append(result.iterations)
        conv.append(result.converged)
        delays.append(delay)
        snrs.append(snr_db)

    return RunReport(
        rows=rows,
        times=np.array(times),
        x_rms=np.array(xr),
        iterations=np.array(iters),
        converged=np.array(conv),
        delays=np.array(delays),
        snr_db=np.array(snrs),
        alarm_events=tuple(alarm_events),
        controls=np.array(controls),
        rho=s.rho,
    )


def window_snr(X: np.ndarray, rho: float, matrix_seed: int) -> float:
    """Recovery SNR of a whole window with every column compressed on its own."""
    X = np.asarray(X, dtype=float)
    cfg = CodecConfig.for_ratio(X.shape[0], rho, matrix_seed=matrix_seed)
    X_hat = np.column_stack([recover(encode(col, cfg)) for col in X.T])
    return snr(X, X_hat)


def sweep_compression(
    s: Scenario,
    rhos: Sequence[float],
    telemetry: Sequence[np.ndarray] | None = None,
    n_windows: int = 20,
    n_states: int | None = None,
) -> list[tuple[float, float]]:
    """Median window SNR per compression ratio, all ratios on the same windows.

    Without ``telemetry`` the windows are ``n_windows`` draws of correlated
    telemetry sized to the scenario network (two states per bus), seeded
    from ``s.rng_seed``.  Window ``i`` is compressed with matrix seed
    ``s.rng_seed + i``.
    """
    if any(not r >= 1 for r in rhos):
        raise ValueError("every compression ratio must be >= 1")
    if telemetry is None:
        if n_states is None:
            net = s.load_network()
            n_states = 2 * sum(net.buses_per_area)
        telemetry = [correlated_telemetry(n_states, s.window, s.rng_seed + i) for i in range(n_windows)]
    out = []
    for rho in rhos:
        vals = [window_snr(X, rho, s.rng_seed + i) for i, X in enumerate(telemetry)]
        out.append((float(rho), float(np.median(vals))))
    return out


def sweep_pilots(s: Scenario, counts: Sequence[int]) -> list[tuple[int, float]]:
    """Final x_rms of the scenario with the ``count`` lowest-numbered load buses as pilots."""
    net = s.load_network()
    out = []
    for count in counts:
        if not 1 <= count <= net.nL:
            raise ValueError(f"pilot count {count} outside [1, {net.nL}]")
        pilots = net.load_buses[:count]
        rep = run_scenario(replace(s, pilot_buses=tuple(pilots)), net)
        out.append((int(count), rep.final_x_rms))
    return out
