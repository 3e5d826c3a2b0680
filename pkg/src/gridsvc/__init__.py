"""Secondary voltage control with compressed PMU telemetry and entropy-based fault detection."""
from .exceptions import FixtureError, GridSVCError
from .fixtures import Scenario, SyntheticSpec, bundled, read_network, read_scenario
from .harness import RunReport, run_scenario, sweep_compression, sweep_pilots

__all__ = [
    "FixtureError",
    "GridSVCError",
    "RunReport",
    "Scenario",
    "SyntheticSpec",
    "bundled",
    "read_network",
    "read_scenario",
    "run_scenario",
    "sweep_compression",
    "sweep_pilots",
]
