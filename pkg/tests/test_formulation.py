"""Constraint system construction: row templates, gating, objective."""

import collections

import numpy as np
import pytest

from sodta.ctm import shortest_paths, simulate
from sodta.formulation import (EQ, LE, build_central_system,
                               check_feasibility, evaluate_objective,
                               trace_to_vector)
from sodta.network import Cell, DemandProfile, SignalSchedule, build_network

from conftest import make_chain


def expected_row_counts(net):
    """Independent count per template from the construction rules."""
    H = net.horizon
    with_succ = [c for c in net.cells if net.successors[c.id]]
    with_pred = [c for c in net.cells if net.predecessors[c.id]]
    interior_with_pred = [c for c in with_pred
                          if c.kind not in ("source", "sink")]
    intersections = [c for c in with_succ if c.kind == "intersection"]
    return {
        "conservation": net.n_cells * H * net.n_od,
        "outflow_occupancy": len(with_succ) * H * net.n_od,
        "outflow_saturation": len(with_succ) * H,
        "inflow_saturation": len(with_pred) * H,
        "inflow_capacity": len(interior_with_pred) * H,
        "signal_saturation": len(intersections) * H,
    }


@pytest.mark.parametrize("scenario_name",
                         ["fig2_scenario", "chain3_scenario",
                          "grid_scenario"])
def test_row_counts_per_template(scenario_name, request):
    sc = request.getfixturevalue(scenario_name)
    system, _ = build_central_system(sc.network, sc.signals, sc.demand)
    got = collections.Counter(lbl.template for lbl in system.labels)
    want = expected_row_counts(sc.network)
    assert got == {k: v for k, v in want.items() if v}
    assert system.n_rows == sum(want.values())


def test_variable_count_and_layout():
    net, signals, demand = make_chain(n_middle=2, horizon=6)
    system, _ = build_central_system(net, signals, demand)
    space = system.space
    # 4 cells and 3 links, 6 steps, 1 od.
    assert space.size == (4 + 3) * 6
    assert space.n_x == 4 * 6
    assert space.describe(space.x_index(3, 2, 0)) == "x[cell=3, t=2, od=0]"
    assert space.describe(space.y_index_pair(2, 3, 1, 0)) == \
        "y[link=(2, 3), t=1, od=0]"


def test_conservation_rows_carry_demand():
    net, signals, demand = make_chain(
        n_middle=2, horizon=6, demand={(1, 0, 0): 1.0, (1, 1, 0): 2.0})
    system, _ = build_central_system(net, signals, demand)
    rhs = {}
    for r, lbl in enumerate(system.labels):
        if lbl.template == "conservation" and lbl.cell == 1:
            rhs[lbl.t] = (system.rhs[r], system.rel[r])
    # Demand enters negated on the right-hand side, equality rows.
    assert rhs[0] == (-1.0, EQ)
    assert rhs[1] == (-2.0, EQ)
    assert rhs[2] == (0.0, EQ)


def test_first_step_outflow_bound_is_zero():
    # At t=0 nothing was held at t-1, so outflow rows read sum(y) <= 0.
    net, signals, demand = make_chain()
    system, _ = build_central_system(net, signals, demand)
    for r, lbl in enumerate(system.labels):
        if lbl.template == "outflow_occupancy" and lbl.t == 0:
            idx, vals, rel, rhs, _ = system.row(r)
            assert rel == LE and rhs == 0.0
            assert all(v == 1.0 for v in vals)
            assert all(i >= system.space.n_x for i in idx)


def test_inflow_capacity_skips_sources_and_sinks():
    net, signals, demand = make_chain()
    system, _ = build_central_system(net, signals, demand)
    cells = {lbl.cell for lbl in system.labels
             if lbl.template == "inflow_capacity"}
    assert cells == {2, 3}


def test_signal_rows_use_gated_saturation():
    cells = [Cell(1, "source", 100.0, 2.0),
             Cell(2, "intersection", 10.0, 3.0),
             Cell(3, "sink", 100.0, 2.0)]
    net = build_network(cells=cells, links=[(1, 2), (2, 3)], delta=1.0,
                        tau=1.0, horizon=4, od_pairs=[(1, 3)])
    signals = SignalSchedule(green=frozenset({(2, 1), (2, 3)}))
    system, _ = build_central_system(net, signals, DemandProfile({}))
    gated = {lbl.t: system.rhs[r] for r, lbl in enumerate(system.labels)
             if lbl.template == "signal_saturation"}
    assert gated == {0: 0.0, 1: 3.0, 2: 0.0, 3: 3.0}


def test_destination_gating_closes_foreign_sinks():
    # Two sinks, one OD each: flow may only enter its own destination.
    cells = [Cell(1, "source", 100.0, 2.0), Cell(2, "ordinary", 8.0, 2.0),
             Cell(3, "sink", 100.0, 2.0), Cell(4, "sink", 100.0, 2.0)]
    net = build_network(cells=cells, links=[(1, 2), (2, 3), (2, 4)],
                        delta=1.0, tau=1.0, horizon=3,
                        od_pairs=[(1, 3), (1, 4)])
    system, _ = build_central_system(net, SignalSchedule(),
                                     DemandProfile({(1, 0, 0): 1.0}))
    space = system.space
    gated = set(system.upper_idx.tolist())
    for t in range(3):
        # od 0 must not enter sink 4, od 1 must not enter sink 3.
        assert space.y_index_pair(2, 4, t, 0) in gated
        assert space.y_index_pair(2, 3, t, 1) in gated
        assert space.y_index_pair(2, 3, t, 0) not in gated
        assert space.y_index_pair(2, 4, t, 1) not in gated
    assert np.all(system.upper_val == 0.0)


def test_objective_prices_non_sink_occupancy_only():
    net, signals, demand = make_chain(n_middle=2, horizon=6, tau=6.0)
    system, objective = build_central_system(net, signals, demand)
    space = system.space
    coeffs = objective.coefficients
    for t in range(6):
        assert coeffs[space.x_index(1, t, 0)] == 6.0
        assert coeffs[space.x_index(2, t, 0)] == 6.0
        assert coeffs[space.x_index(4, t, 0)] == 0.0   # sink
        assert coeffs[space.y_index_pair(1, 2, t, 0)] == 0.0


def test_objective_evaluates_simulated_trace():
    net, signals, demand = make_chain(n_middle=2, horizon=6, tau=6.0)
    system, objective = build_central_system(net, signals, demand)
    trace = simulate(net, signals, demand, shortest_paths(net))
    values = trace_to_vector(system.space, trace.x, trace.y)
    # One vehicle, three steps outside the sink, tau = 6 s.
    assert evaluate_objective(objective, values) == pytest.approx(18.0)


def test_check_feasibility_reports_violations():
    net, signals, demand = make_chain()
    system, _ = build_central_system(net, signals, demand)
    zero = np.zeros(system.space.size)
    report = check_feasibility(system, zero, tol=1e-9)
    # Zero everywhere breaks the demand conservation row at the source.
    assert not report.ok
    assert report.max_violation == pytest.approx(1.0)
    assert "conservation" in report.summary()


def test_feasibility_checks_bounds():
    net, signals, demand = make_chain()
    system, _ = build_central_system(net, signals, demand)
    trace = simulate(net, signals, demand, shortest_paths(net))
    values = trace_to_vector(system.space, trace.x, trace.y)
    values[0] -= 2.0   # push one occupancy negative
    report = check_feasibility(system, values, tol=1e-9)
    assert not report.ok
