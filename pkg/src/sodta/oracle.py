"""Reference linear-program solver for the central assignment problem.

Self-contained two-phase revised simplex on the standard form
``min c'x  s.t.  A x = b, x >= 0`` (inequality rows gain slack variables,
rows with negative right-hand sides are negated, remaining rows get phase-1
artificials). Entering variables follow Bland's rule (lowest eligible
index), leaving variables take the lowest-index minimum ratio, which rules
out cycling. The basis inverse is kept explicitly and refreshed periodically;
final primal and dual values are recomputed from a fresh factorization of the
optimal basis.

The solution is certified before it is returned: primal feasibility against
the original rows, a strong-duality gap at 1e-7, and complementary
slackness. Infeasible programs raise with a Farkas certificate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleProblemError, SimplexError
from .formulation import (EQ, LE, ConstraintSystem, LinearObjective,
                          check_feasibility)

_RC_TOL = 1e-9
_RATIO_TOL = 1e-10
_REFRESH_EVERY = 500


@dataclass(frozen=True)
class LPSolution:
    value: float
    x: np.ndarray
    duals: np.ndarray
    pivots: int
    duality_gap: float
    max_complementarity: float


def optimality_gap(candidate: float, reference: float) -> float:
    """Percent excess of a candidate objective over the reference optimum.

    A zero reference turns the measure into an exact-match check: the gap is
    zero when the candidate is also (numerically) zero and undefined
    otherwise.
    """
    if reference == 0.0:
        if abs(candidate) <= 1e-9:
            return 0.0
        raise ValueError(
            f"gap undefined: reference optimum is 0 but candidate is "
            f"{candidate!r}")
    return 100.0 * (candidate - reference) / reference


def solve_central(system: ConstraintSystem, objective: LinearObjective
                  ) -> LPSolution:
    """Solve the central program to optimality.

    Returns the optimal value, a primal point, and row duals. Raises
    :class:`InfeasibleProblemError` (with a Farkas certificate over the
    original rows) or :class:`SimplexError` on an iteration-cap blowout.
    """
    if objective.coefficients.shape != (system.n_vars,):
        raise ValueError("objective does not match the constraint system")
    std = _StandardForm(system, objective.coefficients)
    x_std, duals_std, pivots = _two_phase(std)
    x = std.original_x(x_std)
    duals = std.original_duals(duals_std)
    value = float(objective.coefficients @ x)

    report = check_feasibility(system, x, tol=1e-9)
    if not report.ok:
        raise SimplexError(
            "simplex returned an infeasible point:\n" + report.summary())
    gap = abs(value - float(duals @ system.rhs))
    residual = system.matrix @ x - system.rhs
    ineq = system.rel == LE
    compl = float(np.abs(duals[ineq] * residual[ineq]).max(initial=0.0))
    if gap > 1e-7:
        raise SimplexError(f"strong-duality gap {gap:.3e} exceeds 1e-7")
    return LPSolution(value=value, x=x, duals=duals, pivots=pivots,
                      duality_gap=gap, max_complementarity=compl)


class _StandardForm:
    """Dense standard form with bookkeeping back to the original rows."""

    def __init__(self, system: ConstraintSystem, costs: np.ndarray):
        m, n = system.n_rows, system.n_vars
        le_rows = np.nonzero(system.rel == LE)[0]
        n_slack = le_rows.size
        a = np.zeros((m, n + n_slack))
        a[:, :n] = system.matrix.toarray()
        slack_col = {int(r): n + k for k, r in enumerate(le_rows)}
        for r, col in slack_col.items():
            a[r, col] = 1.0
        b = system.rhs.astype(np.float64).copy()
        flipped = b < 0
        a[flipped] *= -1.0
        b[flipped] *= -1.0

        # Variables pinned to zero by upper bounds never enter the basis.
        allowed = np.ones(n + n_slack, dtype=bool)
        for idx, ub in zip(system.upper_idx, system.upper_val):
            if ub == 0.0:
                allowed[int(idx)] = False
            else:
                raise SimplexError(
                    "oracle supports zero upper bounds only")

        self.system = system
        self.a = a
        self.b = b
        self.flipped = flipped
        self.n_original = n
        self.n_real = n + n_slack
        self.costs = np.concatenate([costs, np.zeros(n_slack)])
        self.allowed = allowed
        # Initial basis: slack column where usable, else an artificial.
        self.basis = np.empty(m, dtype=np.int64)
        self.artificial_rows = []
        for r in range(m):
            if system.rel[r] == LE and not flipped[r]:
                self.basis[r] = slack_col[r]
            else:
                self.artificial_rows.append(r)
        n_art = len(self.artificial_rows)
        if n_art:
            art = np.zeros((m, n_art))
            for k, r in enumerate(self.artificial_rows):
                art[r, k] = 1.0
                self.basis[r] = self.n_real + k
            self.a = np.hstack([self.a, art])
        self.n_cols = self.a.shape[1]

    def costs_full(self) -> np.ndarray:
        out = np.zeros(self.n_cols)
        out[:self.n_real] = self.costs
        return out

    def original_x(self, x_std: np.ndarray) -> np.ndarray:
        return x_std[:self.n_original].copy()

    def original_duals(self, y_std: np.ndarray) -> np.ndarray:
        y = y_std.copy()
        y[self.flipped] *= -1.0
        return y


def _two_phase(std: _StandardForm) -> tuple[np.ndarray, np.ndarray, int]:
    m = std.b.size
    binv = np.eye(m)
    xb = std.b.copy()
    pivots = 0

    if std.artificial_rows:
        phase1_costs = np.zeros(std.n_cols)
        phase1_costs[std.n_real:] = 1.0
        allowed1 = np.ones(std.n_cols, dtype=bool)
        allowed1[:std.n_real] = std.allowed
        allowed1[std.n_real:] = False  # artificials never re-enter
        binv, xb, pivots = _iterate(std, binv, xb, phase1_costs, allowed1,
                                    pivots)
        infeas = float(phase1_costs[std.basis] @ xb)
        if infeas > 1e-9:
            y = _dual_from_basis(std, phase1_costs)
            raise InfeasibleProblemError(
                f"no feasible point: residual demand {infeas:.3e} cannot be "
                f"placed", farkas=std.original_duals(y))
        binv, xb = _drive_out_artificials(std, binv, xb)

    allowed2 = np.zeros(std.n_cols, dtype=bool)
    allowed2[:std.n_real] = std.allowed
    binv, xb, pivots = _iterate(std, binv, xb, std.costs_full(), allowed2,
                                pivots)

    # Exact primal/dual values from the final basis.
    basis_matrix = std.a[:, std.basis]
    xb = np.linalg.solve(basis_matrix, std.b)
    y = np.linalg.solve(basis_matrix.T, std.costs_full()[std.basis])
    x_std = np.zeros(std.n_cols)
    x_std[std.basis] = xb
    return x_std[:std.n_real], y, pivots


def _dual_from_basis(std: _StandardForm, costs: np.ndarray) -> np.ndarray:
    basis_matrix = std.a[:, std.basis]
    return np.linalg.solve(basis_matrix.T, costs[std.basis])


def _drive_out_artificials(std: _StandardForm, binv: np.ndarray,
                           xb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pivot zero-level artificials out of the phase-1 basis.

    Rows whose artificial cannot be replaced by any permitted structural
    column are redundant; their artificial stays basic at zero and no later
    pivot can move it, so phase 2 is safe either way.
    """
    for r in np.nonzero(std.basis >= std.n_real)[0]:
        row = binv[r] @ std.a[:, :std.n_real]
        row[~std.allowed] = 0.0
        basic = set(std.basis.tolist())
        cand = [int(j) for j in np.nonzero(np.abs(row) > 1e-7)[0]
                if int(j) not in basic]
        if not cand:
            continue
        entering = cand[0]
        direction = binv @ std.a[:, entering]
        theta = xb[r] / direction[r]  # degenerate: xb[r] is (near) zero
        pivot_row = binv[r] / direction[r]
        binv = binv - np.outer(direction, pivot_row)
        binv[r] = pivot_row
        xb = xb - theta * direction
        xb[r] = theta
        std.basis[r] = entering
    return binv, xb


def _iterate(std: _StandardForm, binv: np.ndarray, xb: np.ndarray,
             costs: np.ndarray, allowed: np.ndarray, pivots: int
             ) -> tuple[np.ndarray, np.ndarray, int]:
    m = xb.size
    cap = 50_000 + 50 * m
    candidates = np.nonzero(allowed)[0]
    since_refresh = 0
    while True:
        y = costs[std.basis] @ binv
        reduced = costs[candidates] - y @ std.a[:, candidates]
        eligible = np.nonzero(reduced < -_RC_TOL)[0]
        if eligible.size == 0:
            # Guard against drift: refresh the basis inverse and re-check.
            if since_refresh > 0:
                binv = np.linalg.inv(std.a[:, std.basis])
                xb = binv @ std.b
                since_refresh = 0
                y = costs[std.basis] @ binv
                reduced = costs[candidates] - y @ std.a[:, candidates]
                eligible = np.nonzero(reduced < -_RC_TOL)[0]
            if eligible.size == 0:
                return binv, xb, pivots
        entering = int(candidates[eligible[0]])  # Bland: lowest index

        direction = binv @ std.a[:, entering]
        positive = np.nonzero(direction > _RATIO_TOL)[0]
        if positive.size == 0:
            raise SimplexError(
                f"unbounded direction on column {entering}")
        ratios = xb[positive] / direction[positive]
        best = ratios.min()
        ties = positive[np.nonzero(ratios <= best + 1e-12)[0]]
        leaving_row = int(ties[np.argmin(std.basis[ties])])  # Bland again

        theta = xb[leaving_row] / direction[leaving_row]
        xb = xb - theta * direction
        xb[leaving_row] = theta
        pivot_row = binv[leaving_row] / direction[leaving_row]
        binv = binv - np.outer(direction, pivot_row)
        binv[leaving_row] = pivot_row
        std.basis[leaving_row] = entering
        pivots += 1
        since_refresh += 1
        if since_refresh >= _REFRESH_EVERY:
            binv = np.linalg.inv(std.a[:, std.basis])
            xb = binv @ std.b
            since_refresh = 0
        if pivots > cap:
            raise SimplexError(
                f"iteration cap {cap} exceeded after {pivots} pivots")
