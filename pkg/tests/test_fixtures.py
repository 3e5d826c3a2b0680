import numpy as np
import pytest

from gridsvc.exceptions import FixtureError
from gridsvc.fixtures import (
    LoadEvent,
    Scenario,
    SyntheticSpec,
    format_network,
    parse_network,
    parse_scenario,
    read_scenario,
    write_network,
)
from gridsvc.grid_model import build_synthetic_network


def test_bundled_network_shape(net9):
    assert net9.n_areas == 3
    assert net9.buses_per_area == (9, 9, 9)
    assert net9.load_buses == (7, 8, 9, 16, 17, 18, 25, 26, 27)


def test_network_text_round_trip(tmp_path):
    net = build_synthetic_network(2, 2, 1, 3, 5)
    again = parse_network(format_network(net))
    np.testing.assert_array_equal(again.B, net.B)
    np.testing.assert_array_equal(again.q_load0, net.q_load0)
    path = tmp_path / "n.net"
    write_network(net, path)
    assert path.read_text() == format_network(net)


def test_load_steps_scenario(load_steps):
    assert [(e.time_s, e.buses, e.factor) for e in load_steps.events] == [
        (21.0, (7, 8, 9), 1.03),
        (42.0, (7, 8, 9), 0.97),
    ]
    assert load_steps.duration_s == 60 and load_steps.rho == 1
    assert load_steps.controller.beta == 0.5 and load_steps.controller.epsilon == 0.001
    assert load_steps.detector.threshold == 0.05 and load_steps.detector.m2 == 8
    assert load_steps.pilot_buses == ()


def test_synthetic_network_reference():
    s = parse_scenario("format = 1\nnetwork = synthetic 2 1 1 2 9\nduration_s = 5\n")
    assert s.network == SyntheticSpec(2, 1, 1, 2, 9)
    assert s.load_network().nL == 4


@pytest.mark.parametrize(
    "text",
    [
        "network = x.net\n",  # no format line
        "format = 2\nnetwork = x.net\n",
        "format = 1\nrho = 0.5\n",
        "format = 1\nrho = 1\nrho = 2\n",
        "format = 1\nevent = 5, 7, 1.1\nevent = 3, 7, 1.1\n",
        "format = 1\nduration_s = 10\nevent = 20, 7, 1.1\n",
        "format = 1\nevent = 5, 7\n",
        "format = 1\nbogus = 3\n",
        "format = 1\nbeta = 2\n",
    ],
)
def test_malformed_scenarios(text):
    with pytest.raises(FixtureError):
        parse_scenario(text)


def test_missing_file(tmp_path):
    with pytest.raises(FixtureError):
        read_scenario(tmp_path / "none.scn")


def test_scenario_invariants():
    with pytest.raises(FixtureError):
        Scenario(SyntheticSpec(), events=(LoadEvent(5, (7,), 1.1), LoadEvent(1, (7,), 1.1)))
    with pytest.raises(FixtureError):
        Scenario(SyntheticSpec(), rho=0.9)
    with pytest.raises(FixtureError):
        Scenario(SyntheticSpec(), duration_s=10, events=(LoadEvent(10, (7,), 1.1),))
