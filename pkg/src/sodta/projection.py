"""Euclidean projection onto a constraint polyhedron.

Solves ``min ||v - z||^2 subject to A v (=|<=) b, 0 <= v (<= ub)`` by cyclic
dual row-action ascent: each row's multiplier is updated in turn, equality
rows without sign restriction, inequality rows and bounds clipped at zero.
The primal point is kept consistent with the duals throughout
(``v = z - A' lam + mu_lower - mu_upper``), so the only things to certify at
the end are primal feasibility and complementary slackness; both are checked
through an exact KKT residual between sweep blocks.

Multipliers live in a :class:`ProjectionWorkspace` and are reused across
calls, which makes repeated projections of slowly moving points (the solver's
inner loop) converge in a handful of sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ProjectionError
from .formulation import EQ, LE, ConstraintSystem

_BLOCK_SWEEPS = 64


@dataclass
class ProjectionWorkspace:
    """Warm-startable dual state for one constraint system."""

    tolerance: float = 1e-6
    max_sweeps: int = 10_000
    row_dual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lower_dual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    upper_dual: np.ndarray = field(default_factory=lambda: np.zeros(0))
    anchor: np.ndarray | None = None
    last_sweeps: int = 0
    total_sweeps: int = 0

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance!r}")
        if self.max_sweeps < 1:
            raise ValueError(f"max_sweeps must be >= 1, got {self.max_sweeps!r}")

    @classmethod
    def for_system(cls, system: ConstraintSystem, tolerance: float = 1e-6,
                   max_sweeps: int = 10_000) -> "ProjectionWorkspace":
        return cls(tolerance=tolerance, max_sweeps=max_sweeps,
                   row_dual=np.zeros(system.n_rows),
                   lower_dual=np.zeros(system.n_vars),
                   upper_dual=np.zeros(system.upper_idx.size))

    def reset(self) -> None:
        self.row_dual[:] = 0.0
        self.lower_dual[:] = 0.0
        self.upper_dual[:] = 0.0
        self.anchor = None
        self.last_sweeps = 0


def project(point: np.ndarray, system: ConstraintSystem,
            workspace: ProjectionWorkspace | None = None) -> np.ndarray:
    """Project ``point`` onto the feasible set of ``system``.

    Returns the projected point; the workspace keeps the multipliers for
    warm-starting the next call. Raises :class:`ProjectionError` when the
    KKT residual does not reach the workspace tolerance within its sweep
    budget.
    """
    ws = workspace if workspace is not None else \
        ProjectionWorkspace.for_system(system)
    z = np.ascontiguousarray(point, dtype=np.float64)
    if z.shape != (system.n_vars,):
        raise ValueError(f"expected {system.n_vars} coordinates, "
                         f"got shape {z.shape}")
    if ws.row_dual.shape != (system.n_rows,) or \
            ws.lower_dual.shape != (system.n_vars,) or \
            ws.upper_dual.shape != (system.upper_idx.size,):
        raise ValueError("workspace shaped for a different system")
    ws.anchor = z.copy()

    # Rebuild the primal point implied by the warm-start duals so the
    # stationarity identity holds from the first sweep.
    v = z - system.matrix.T @ ws.row_dual + ws.lower_dual
    if system.upper_idx.size:
        np.subtract.at(v, system.upper_idx, ws.upper_dual)
    v = np.ascontiguousarray(v)

    arrays = system.sweep_arrays()
    ws.last_sweeps = 0
    remaining = ws.max_sweeps
    residual = kkt_residual(v, ws, system)
    while residual > ws.tolerance:
        if remaining <= 0:
            raise ProjectionError(
                f"projection stalled at KKT residual {residual:.3e} after "
                f"{ws.last_sweeps} sweeps (tolerance {ws.tolerance:g})",
                residual=residual, sweeps=ws.last_sweeps)
        block = min(_BLOCK_SWEEPS, remaining)
        _, used, _, _ = _kernels.run_sweeps(
            v, *arrays[:7], ws.row_dual, ws.lower_dual,
            arrays[7], arrays[8], ws.upper_dual,
            block, 0.05 * ws.tolerance)
        ws.last_sweeps += used
        ws.total_sweeps += used
        remaining -= used
        residual = kkt_residual(v, ws, system)
    return v


def kkt_residual(point: np.ndarray, duals: ProjectionWorkspace,
                 system: ConstraintSystem) -> float:
    """Exact max of primal infeasibility, dual infeasibility, stationarity,
    and complementary slackness for the projection program."""
    v = np.asarray(point, dtype=np.float64)
    residual = system.matrix @ v - system.rhs
    eq = system.rel == EQ
    primal = 0.0
    if eq.any():
        primal = float(np.abs(residual[eq]).max())
    if (~eq).any():
        primal = max(primal, float(residual[~eq].max(initial=0.0)))
    if v.size:
        primal = max(primal, float((-v).max(initial=0.0)))
    over = np.zeros(0)
    if system.upper_idx.size:
        over = v[system.upper_idx] - system.upper_val
        primal = max(primal, float(over.max(initial=0.0)))

    dual_feas = 0.0
    ineq_dual = duals.row_dual[~eq]
    if ineq_dual.size:
        dual_feas = float((-ineq_dual).max(initial=0.0))
    dual_feas = max(dual_feas, float((-duals.lower_dual).max(initial=0.0)))
    if duals.upper_dual.size:
        dual_feas = max(dual_feas, float((-duals.upper_dual).max(initial=0.0)))

    stationarity = 0.0
    if duals.anchor is not None:
        grad = (v - duals.anchor + system.matrix.T @ duals.row_dual
                - duals.lower_dual)
        if system.upper_idx.size:
            np.add.at(grad, system.upper_idx, duals.upper_dual)
        stationarity = float(np.abs(grad).max(initial=0.0))

    compl = 0.0
    if ineq_dual.size:
        compl = float(np.abs(ineq_dual * residual[~eq]).max(initial=0.0))
    compl = max(compl, float(np.abs(duals.lower_dual * v).max(initial=0.0)))
    if duals.upper_dual.size:
        compl = max(compl, float(np.abs(duals.upper_dual * over).max(initial=0.0)))

    return max(primal, dual_feas, stationarity, compl)
