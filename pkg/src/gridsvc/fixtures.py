"""Text fixtures for networks and scenarios.

Both formats are flat ``key = value`` files with ``#`` comments and a
leading ``format = 1`` line.  Network files add ``matrix NAME ROWS COLS``
blocks (one row per line, closed by ``end``); scenario files may repeat
``event`` and ``sensor_noise`` lines::

    event = 21, 7 8 9, 1.03          # time_s, buses, factor
    sensor_noise = 30, 8, 40         # start_s, buses, snr_db
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .exceptions import FixtureError, GridSVCError
from .grid_model import NetworkModel, build_synthetic_network
from .svc_controller import ControllerConfig
from .telemetry_comms import ChannelModel

FORMAT_VERSION = 1
DATA_DIR = Path(__file__).with_name("data")

_NETWORK_VECTORS = ("v_ref", "v_gen0", "q_cap0", "q_load0", "v_cap0", "q_gen0", "v_slack", "q_slack0")


# -- scenario types -------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    areas: int = 3
    n_gen: int = 3
    n_cap: int = 2
    n_load: int = 3
    seed: int = 0

    def build(self) -> NetworkModel:
        return build_synthetic_network(self.areas, self.n_gen, self.n_cap, self.n_load, self.seed)


@dataclass(frozen=True)
class LoadEvent:
    time_s: float
    buses: tuple[int, ...]
    factor: float


@dataclass(frozen=True)
class SensorNoise:
    start_s: float
    buses: tuple[int, ...]
    snr_db: float


@dataclass(frozen=True)
class DetectorSettings:
    m2: int = 8
    threshold: float = 0.05
    selection_tol: float = 1e-2


@dataclass(frozen=True)
class Scenario:
    """Everything a run needs; ``pilot_buses`` empty means every load bus."""

    network: Path | SyntheticSpec
    duration_s: float = 60.0
    events: tuple[LoadEvent, ...] = ()
    sensor_noise: tuple[SensorNoise, ...] = ()
    pilot_buses: tuple[int, ...] = ()
    rho: float = 1.0
    channel: ChannelModel = field(default_factory=ChannelModel)
    detector: DetectorSettings = field(default_factory=DetectorSettings)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    rng_seed: int = 0
    sample_period_s: float = 1.0
    window: int = 20
    v_step: float = 0.05
    q_step: float = 0.2
    v_gen_limits: tuple[float, float] = (0.9, 1.1)
    q_cap_limits: tuple[float, float] = (0.0, 0.6)

    def __post_init__(self) -> None:
        times = [e.time_s for e in self.events]
        if times != sorted(times):
            raise FixtureError("events must be sorted by time")
        if not self.rho >= 1:
            raise FixtureError(f"rho must be >= 1, got {self.rho}")
        if not self.sample_period_s > 0:
            raise FixtureError("sample period must be positive")
        if times and not self.duration_s > times[-1]:
            raise FixtureError("duration must exceed the last event time")
        if self.duration_s <= 0:
            raise FixtureError("duration must be positive")
        if self.window < 1:
            raise FixtureError("window must hold at least one sample")
        for lo, hi in (self.v_gen_limits, self.q_cap_limits):
            if not lo <= hi:
                raise FixtureError(f"setpoint limits ({lo}, {hi}) are inverted")
        for e in self.events:
            if not e.factor > 0:
                raise FixtureError(f"load factor must be positive, got {e.factor}")

    @property
    def n_steps(self) -> int:
        return int(math.floor(self.duration_s / self.sample_period_s + 1e-9))

    def load_network(self) -> NetworkModel:
        if isinstance(self.network, SyntheticSpec):
            return self.network.build()
        return read_network(self.network)


# -- low-level parsing ----------------------------------------------------------

def _lines(text: str, source: str) -> list[tuple[int, str]]:
    out = []
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append((no, line))
    if not out or out[0][1].replace(" ", "") != f"format={FORMAT_VERSION}":
        raise FixtureError(f"{source}: first line must be 'format = {FORMAT_VERSION}'")
    return out[1:]


def _floats(value: str, where: str) -> list[float]:
    try:
        return [float(tok) for tok in value.replace(",", " ").split()]
    except ValueError:
        raise FixtureError(f"{where}: expected numbers, got {value!r}") from None


def _ints(value: str, where: str) -> list[int]:
    try:
        return [int(tok) for tok in value.replace(",", " ").split()]
    except ValueError:
        raise FixtureError(f"{where}: expected integers, got {value!r}") from None


def _one(values: list, where: str):
    if len(values) != 1:
        raise FixtureError(f"{where}: expected a single value")
    return values[0]


def _fmt(values: Iterable[float]) -> str:
    return " ".join(repr(float(v)) for v in values)


# -- networks ----------------------------------------------------------------------

def parse_network(text: str, source: str = "<network>") -> NetworkModel:
    lines = _lines(text, source)
    scalars: dict[str, str] = {}
    matrices: dict[str, np.ndarray] = {}
    i = 0
    while i < len(lines):
        no, line = lines[i]
        where = f"{source}:{no}"
        if line.startswith("matrix"):
            parts = line.split()
            if len(parts) != 4:
                raise FixtureError(f"{where}: expected 'matrix NAME ROWS COLS'")
            name = parts[1]
            rows, cols = _ints(" ".join(parts[2:]), where)
            data = []
            for _ in range(rows):
                i += 1
                if i >= len(lines):
                    raise FixtureError(f"{where}: matrix {name} is truncated")
                row = _floats(lines[i][1], f"{source}:{lines[i][0]}")
                if len(row) != cols:
                    raise FixtureError(f"{source}:{lines[i][0]}: matrix {name} row has {len(row)} entries, expected {cols}")
                data.append(row)
            i += 1
            if i >= len(lines) or lines[i][1] != "end":
                raise FixtureError(f"{where}: matrix {name} must be closed by 'end'")
            matrices[name] = np.array(data, dtype=float).reshape(rows, cols)
        elif "=" in line:
            key, value = (s.strip() for s in line.split("=", 1))
            scalars[key] = value
        else:
            raise FixtureError(f"{where}: cannot parse {line!r}")
        i += 1

    if scalars.get("type", "network") != "network":
        raise FixtureError(f"{source}: not a network fixture")
    if "B" not in matrices:
        raise FixtureError(f"{source}: missing 'matrix B'")
    try:
        areas = int(scalars["areas"])
        counts = {k: _ints(scalars[k], f"{source}:{k}") for k in ("n_gen", "n_cap", "n_load")}
        vectors = {k: np.array(_floats(scalars[k], f"{source}:{k}")) for k in _NETWORK_VECTORS if k in scalars}
        tie = _floats(scalars.get("tie_line_impedance", "0.02 0.07"), f"{source}:tie_line_impedance")
        if len(tie) != 2:
            raise FixtureError(f"{source}: tie_line_impedance needs 'R X'")
        return NetworkModel(
            n_areas=areas,
            n_gen=tuple(counts["n_gen"]),
            n_cap=tuple(counts["n_cap"]),
            n_load=tuple(counts["n_load"]),
            B=matrices["B"],
            tie_line_impedance=complex(tie[0], tie[1]),
            ref_coupling=matrices.get("ref_coupling"),
            name=scalars.get("name", Path(source).stem),
            **vectors,
        )
    except KeyError as exc:
        raise FixtureError(f"{source}: missing key {exc.args[0]!r}") from None
    except (ValueError, GridSVCError) as exc:
        if isinstance(exc, FixtureError):
            raise
        raise FixtureError(f"{source}: {exc}") from None


def read_network(path: str | Path) -> NetworkModel:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FixtureError(f"cannot read {path}: {exc.strerror}") from None
    return parse_network(text, str(path))


def format_network(net: NetworkModel) -> str:
    out = [
        f"format = {FORMAT_VERSION}",
        "type = network",
        f"name = {net.name}",
        f"areas = {net.n_areas}",
        "n_gen = " + " ".join(map(str, net.n_gen)),
        "n_cap = " + " ".join(map(str, net.n_cap)),
        "n_load = " + " ".join(map(str, net.n_load)),
        f"tie_line_impedance = {net.tie_line_impedance.real!r} {net.tie_line_impedance.imag!r}",
    ]
    out += [f"{k} = {_fmt(getattr(net, k))}" for k in _NETWORK_VECTORS]
    for name in ("B", "ref_coupling"):
        M = getattr(net, name)
        out.append(f"matrix {name} {M.shape[0]} {M.shape[1]}")
        out += [_fmt(row) for row in M]
        out.append("end")
    return "\n".join(out) + "\n"


def write_network(net: NetworkModel, path: str | Path) -> None:
    Path(path).write_text(format_network(net))


# -- scenarios --------------------------------------------------------------------

def _parse_network_ref(value: str, base: Path, where: str) -> Path | SyntheticSpec:
    parts = value.split()
    if parts and parts[0] == "synthetic":
        nums = _ints(" ".join(parts[1:]), where)
        if len(nums) != 5:
            raise FixtureError(f"{where}: expected 'synthetic AREAS N_GEN N_CAP N_LOAD SEED'")
        return SyntheticSpec(*nums)
    p = Path(value)
    return p if p.is_absolute() else base / p


def _triple(value: str, where: str) -> tuple[float, tuple[int, ...], float]:
    parts = [s.strip() for s in value.split(",")]
    if len(parts) != 3:
        raise FixtureError(f"{where}: expected 'time, buses, value'")
    return _one(_floats(parts[0], where), where), tuple(_ints(parts[1], where)), _one(_floats(parts[2], where), where)


def parse_scenario(text: str, source: str = "<scenario>", base: Path | None = None) -> Scenario:
    base = Path(".") if base is None else base
    lines = _lines(text, source)
    kv: dict[str, str] = {}
    events: list[LoadEvent] = []
    noise: list[SensorNoise] = []
    for no, line in lines:
        where = f"{source}:{no}"
        if "=" not in line:
            raise FixtureError(f"{where}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "event":
            t, buses, factor = _triple(value, where)
            events.append(LoadEvent(t, buses, factor))
        elif key == "sensor_noise":
            t, buses, snr = _triple(value, where)
            noise.append(SensorNoise(t, buses, snr))
        elif key in kv:
            raise FixtureError(f"{where}: duplicate key {key!r}")
        else:
            kv[key] = value

    def num(key: str, default: float) -> float:
        return _one(_floats(kv[key], f"{source}:{key}"), key) if key in kv else default

    def integer(key: str, default: int) -> int:
        return _one(_ints(kv[key], f"{source}:{key}"), key) if key in kv else default

    def pair(key: str, default: tuple[float, float]) -> tuple[float, float]:
        if key not in kv:
            return default
        vals = _floats(kv[key], f"{source}:{key}")
        if len(vals) != 2:
            raise FixtureError(f"{source}:{key}: expected 'LOW HIGH'")
        return vals[0], vals[1]

    if kv.pop("type", "scenario") != "scenario":
        raise FixtureError(f"{source}: not a scenario fixture")
    if "network" not in kv:
        raise FixtureError(f"{source}: missing key 'network'")
    snr_text = kv.get("channel_snr_db", "none")
    pilots_text = kv.get("pilots", "all")
    try:
        return Scenario(
            network=_parse_network_ref(kv["network"], base, f"{source}:network"),
            duration_s=num("duration_s", 60.0),
            events=tuple(events),
            sensor_noise=tuple(noise),
            pilot_buses=() if pilots_text == "all" else tuple(_ints(pilots_text, f"{source}:pilots")),
            rho=num("rho", 1.0),
            channel=ChannelModel(
                bandwidth_bps=num("bandwidth_bps", 5e6),
                fixed_latency_s=num("latency_s", 0.01),
                noise_snr_db=None if snr_text == "none" else num("channel_snr_db", 0.0),
                rng_seed=integer("rng_seed", 0),
            ),
            detector=DetectorSettings(
                m2=integer("m2", 8),
                threshold=num("threshold", 0.05),
                selection_tol=num("selection_tol", 1e-2),
            ),
            controller=ControllerConfig(
                beta=num("beta", 0.5),
                epsilon=num("epsilon", 0.001),
                max_iterations=integer("max_iterations", 50),
            ),
            rng_seed=integer("rng_seed", 0),
            sample_period_s=num("sample_period_s", 1.0),
            window=integer("window", 20),
            v_step=num("v_step", 0.05),
            q_step=num("q_step", 0.2),
            v_gen_limits=pair("v_gen_limits", (0.9, 1.1)),
            q_cap_limits=pair("q_cap_limits", (0.0, 0.6)),
        )
    except FixtureError:
        raise
    except ValueError as exc:
        raise FixtureError(f"{source}: {exc}") from None


def read_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FixtureError(f"cannot read {path}: {exc.strerror}") from None
    return parse_scenario(text, str(path), path.parent)


def bundled(name: str) -> Path:
    """Path of a fixture shipped with the package."""
    path = DATA_DIR / name
    if not path.exists():
        raise FixtureError(f"no bundled fixture named {name!r}")
    return path
