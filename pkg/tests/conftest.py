"""Shared fixtures: bundled scenarios and small hand-built networks."""

import pytest

from sodta.network import (Cell, DemandProfile, SignalSchedule,
                           build_network)
from sodta.scenario import load_scenario


def make_chain(n_middle=2, horizon=6, tau=6.0, sat_flow=1.0,
               max_occupancy=4.0, demand=None):
    """Source, ``n_middle`` ordinary cells, sink, in a line.

    Cells are numbered 1..n_middle+2. Demand defaults to one vehicle
    entering at t=0.
    """
    n = n_middle + 2
    cells = [Cell(1, "source", 100.0, sat_flow)]
    cells += [Cell(i, "ordinary", max_occupancy, sat_flow)
              for i in range(2, n)]
    cells += [Cell(n, "sink", 100.0, sat_flow)]
    links = [(i, i + 1) for i in range(1, n)]
    network = build_network(cells=cells, links=links, delta=1.0, tau=tau,
                            horizon=horizon, od_pairs=[(1, n)])
    if demand is None:
        demand = {(1, 0, 0): 1.0}
    return network, SignalSchedule(), DemandProfile(dict(demand))


@pytest.fixture(scope="session")
def fig2_scenario():
    return load_scenario("fig2")


@pytest.fixture(scope="session")
def chain3_scenario():
    return load_scenario("chain3")


@pytest.fixture(scope="session")
def grid_scenario():
    return load_scenario("grid2x2")


@pytest.fixture(scope="session")
def bundled(fig2_scenario, chain3_scenario, grid_scenario):
    return [fig2_scenario, chain3_scenario, grid_scenario]


# Acceptance tests record one verdict line each; the summary hook below
# repeats them at the end of the run so they stay visible without -s.
acceptance_log = []


def record_criterion(tag, ok, detail=""):
    line = f"{tag}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f" ({detail})"
    acceptance_log.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_log:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log:
            terminalreporter.write_line(line)
