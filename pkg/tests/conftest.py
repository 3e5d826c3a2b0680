from __future__ import annotations

import pytest

from gridsvc.fixtures import bundled, read_network, read_scenario

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def load_steps():
    return read_scenario(bundled("load_steps.scn"))


@pytest.fixture(scope="session")
def fault_scenario():
    return read_scenario(bundled("fault.scn"))


@pytest.fixture(scope="session")
def noise_scenario():
    return read_scenario(bundled("noise_only.scn"))


@pytest.fixture(scope="session")
def net9():
    return read_network(bundled("three_area_9bus.net"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
