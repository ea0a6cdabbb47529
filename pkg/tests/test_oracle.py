"""Exact LP solver: hand optima, enumeration cross-checks, certificates."""

import itertools

import numpy as np
import pytest

from sodta.errors import InfeasibleProblemError
from sodta.formulation import (EQ, LE, ConstraintSystem, RowLabel,
                               build_central_system, check_feasibility)
from sodta.network import DemandProfile
from sodta.oracle import optimality_gap, solve_central

from conftest import make_chain


def make_system(a, rel, rhs, upper=None):
    a = np.asarray(a, dtype=float)
    import scipy.sparse as sp
    labels = tuple(RowLabel("conservation", 0, r, None)
                   for r in range(a.shape[0]))
    if upper:
        upper_idx = np.array(sorted(upper), dtype=np.int64)
        upper_val = np.array([upper[i] for i in sorted(upper)])
    else:
        upper_idx = np.zeros(0, dtype=np.int64)
        upper_val = np.zeros(0)
    return ConstraintSystem(None, sp.csr_matrix(a),
                            np.asarray(rel, dtype=np.int64),
                            np.asarray(rhs, dtype=float), labels,
                            upper_idx, upper_val)


class DenseObjective:
    """Duck-typed stand-in for LinearObjective on synthetic systems."""

    def __init__(self, coefficients):
        self.coefficients = np.asarray(coefficients, dtype=float)


def enumerate_optimum(a, rel, rhs, costs, upper=None):
    """Optimal value by checking every basic point of the polyhedron.

    All rows (constraints, nonnegativity, upper bounds) are written as
    half-spaces or equalities; every choice of n of them pinned to equality
    yields a candidate vertex. Bounded feasible problems attain their
    optimum at one of these.
    """
    a = np.asarray(a, dtype=float)
    m, n = a.shape
    planes = [(a[r], rhs[r]) for r in range(m)]
    planes += [(-(np.eye(n)[j]), 0.0) for j in range(n)]
    upper = upper or {}
    planes += [(np.eye(n)[j], u) for j, u in upper.items()]
    forced = [r for r in range(m) if rel[r] == EQ]
    free = [i for i in range(len(planes)) if i not in forced]

    def feasible(v):
        if (v < -1e-9).any():
            return False
        r = a @ v - np.asarray(rhs)
        for i in range(m):
            if rel[i] == EQ and abs(r[i]) > 1e-9:
                return False
            if rel[i] == LE and r[i] > 1e-9:
                return False
        return all(v[j] <= u + 1e-9 for j, u in upper.items())

    best = np.inf
    need = n - len(forced)
    for combo in itertools.combinations(free, need):
        active = forced + list(combo)
        mat = np.array([planes[i][0] for i in active])
        vec = np.array([planes[i][1] for i in active])
        if abs(np.linalg.det(mat)) < 1e-12:
            continue
        v = np.linalg.solve(mat, vec)
        if feasible(v):
            best = min(best, float(np.asarray(costs) @ v))
    return best


def test_chain_single_vehicle_optimum(chain3_scenario):
    sc = chain3_scenario
    system, objective = build_central_system(sc.network, sc.signals,
                                             sc.demand)
    sol = solve_central(system, objective)
    # One vehicle spends exactly two one-second steps outside the sink.
    assert sol.value == pytest.approx(2.0, abs=1e-9)
    assert sol.duality_gap <= 1e-7
    assert check_feasibility(system, sol.x, tol=1e-9).ok


def test_short_horizon_strands_vehicles():
    # Three vehicles, two steps, discharge one per step: 3 + 3 held.
    net, signals, demand = make_chain(
        n_middle=1, horizon=2, tau=1.0, demand={(1, 0, 0): 3.0})
    system, objective = build_central_system(net, signals, demand)
    sol = solve_central(system, objective)
    assert sol.value == pytest.approx(6.0, abs=1e-9)


def test_zero_demand_zero_objective():
    net, signals, _ = make_chain()
    system, objective = build_central_system(net, signals,
                                             DemandProfile({}))
    sol = solve_central(system, objective)
    assert sol.value == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(sol.x, 0.0, atol=1e-12)


def test_matches_vertex_enumeration_on_random_lps():
    rng = np.random.default_rng(20240818)
    solved = 0
    while solved < 20:
        n = int(rng.integers(2, 5))
        m = int(rng.integers(1, 5))
        if m + n > 12:
            continue
        a = np.round(rng.normal(size=(m, n)), 2)
        for r in range(m):
            if not a[r].any():
                a[r, 0] = 1.0
        interior = rng.uniform(0.2, 1.5, size=n)
        rel = [EQ if rng.random() < 0.25 else LE for _ in range(m)]
        rhs = a @ interior
        rhs = [rhs[r] if rel[r] == EQ else rhs[r] + rng.uniform(0.1, 1.0)
               for r in range(m)]
        # Finite box rows keep every instance bounded regardless of costs.
        box = [float(interior[j] + rng.uniform(0.5, 2.0)) for j in range(n)]
        a_full = np.vstack([a, np.eye(n)])
        rel_full = rel + [LE] * n
        rhs_full = list(rhs) + box
        costs = np.round(rng.normal(size=n), 2)

        reference = enumerate_optimum(a_full, rel_full, rhs_full, costs)
        assert np.isfinite(reference)
        system = make_system(a_full, rel_full, rhs_full)
        sol = solve_central(system, DenseObjective(costs))
        assert abs(sol.value - reference) <= 1e-9, \
            f"instance {solved}: {sol.value} vs {reference}"
        solved += 1


def test_row_and_column_permutation_invariance():
    rng = np.random.default_rng(4)
    # Box rows bound the polytope; the optimum is unique for these costs.
    a = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 1.0], [1.0, 0.0, 3.0],
                  [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    rel = [LE, LE, EQ, LE, LE, LE]
    rhs = [4.0, 3.0, 2.0, 5.0, 5.0, 5.0]
    costs = np.array([1.0, -2.0, 0.5])
    base = solve_central(make_system(a, rel, rhs), DenseObjective(costs))

    perm_r = rng.permutation(len(rel))
    perm_c = rng.permutation(3)
    a2 = a[perm_r][:, perm_c]
    sol2 = solve_central(
        make_system(a2, [rel[i] for i in perm_r],
                    [rhs[i] for i in perm_r]),
        DenseObjective(costs[perm_c]))
    assert sol2.value == pytest.approx(base.value, abs=1e-10)
    np.testing.assert_allclose(sol2.x, base.x[perm_c], atol=1e-9)


def test_infeasible_problem_raises_with_certificate():
    # x1 + x2 <= 1 and x1 + x2 = 3 cannot both hold.
    a = [[1.0, 1.0], [1.0, 1.0]]
    system = make_system(a, [LE, EQ], [1.0, 3.0])
    with pytest.raises(InfeasibleProblemError) as err:
        solve_central(system, DenseObjective([1.0, 1.0]))
    farkas = err.value.farkas
    assert farkas is not None
    # The certificate prices rows so that the combined row is unsatisfiable:
    # nonnegative on <= rows, combined coefficients <= 0, positive rhs.
    y = np.asarray(farkas)
    combo = y @ np.asarray(a)
    assert y[0] <= 1e-9          # <= row priced nonpositively in this sign
    assert float(y @ [1.0, 3.0]) > 1e-9
    assert (combo <= 1e-9).all()


def test_gated_columns_stay_out_of_solution():
    net, signals, demand = make_chain(n_middle=1, horizon=4, tau=1.0)
    cells = list(net.cells)
    from sodta.network import Cell, build_network
    cells.append(Cell(9, "sink", 100.0, 1.0))
    links = list(net.links) + [(2, 9)]
    net2 = build_network(cells=cells, links=links, delta=1.0, tau=1.0,
                         horizon=4, od_pairs=[(1, 3)])
    system, objective = build_central_system(net2, signals, demand)
    sol = solve_central(system, objective)
    # Sink 9 is not the destination: no flow may enter it.
    for t in range(4):
        assert sol.x[system.space.y_index_pair(2, 9, t, 0)] == 0.0


def test_optimality_gap_arithmetic():
    assert optimality_gap(110.0, 100.0) == pytest.approx(10.0)
    assert optimality_gap(100.0, 100.0) == 0.0
    assert optimality_gap(95.0, 100.0) == pytest.approx(-5.0)
    # Zero reference only matches a zero candidate.
    assert optimality_gap(0.0, 0.0) == 0.0
    with pytest.raises(ValueError, match="undefined"):
        optimality_gap(1.0, 0.0)


def test_duality_gap_reported_tight(fig2_scenario):
    sc = fig2_scenario
    system, objective = build_central_system(sc.network, sc.signals,
                                             sc.demand)
    sol = solve_central(system, objective)
    assert sol.value == pytest.approx(36.0, abs=1e-9)
    assert sol.duality_gap <= 1e-7
    assert sol.max_complementarity <= 1e-7
