"""Time-expanded linear program for system-optimal traffic assignment.

Decision variables, per OD pair and per step t in {0..H-1}:

* ``x[i, t, od]``  occupancy of cell i at the end of step t,
* ``y[(i,j), t, od]``  vehicles moved over link (i, j) during step t.

The network starts empty, so occupancy terms referencing step -1 vanish.
Constraint rows come from six templates:

* ``conservation``        inflow - outflow = x[t] - x[t-1] (demand enters the
                          right-hand side at source cells; sinks only gain),
* ``outflow_occupancy``   a cell cannot send more than it held at t-1, per OD,
* ``outflow_saturation``  total outflow of a cell capped by its sat_flow,
* ``inflow_saturation``   total inflow of a cell capped by its sat_flow,
* ``inflow_capacity``     total inflow capped by delta * spare occupancy
                          (skipped for sources and sinks, whose occupancy is
                          unbounded),
* ``signal_saturation``   intersection outflow capped by the signal-gated
                          saturation flow.

All variables are nonnegative. Flow into a sink that is not the destination
of the flow's OD pair is pinned to zero through an upper bound, so vehicles
can only leave the network at their own destination.

Minimizing ``tau * sum of non-sink occupancies`` minimizes total travel time:
every step a vehicle spends outside a sink contributes one tau.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NetworkError
from .network import (INTERSECTION, SINK, SOURCE, DemandProfile, Network,
                      SignalSchedule, effective_sat_flow)

EQ = 0   # row relation: equality
LE = 1   # row relation: <=

TEMPLATES = ("conservation", "outflow_occupancy", "outflow_saturation",
             "inflow_saturation", "inflow_capacity", "signal_saturation")


@dataclass(frozen=True)
class RowLabel:
    """Identity of one constraint row: which template produced it, where.

    ``cell`` is the cell the row is indexed by; it decides which sub-problem
    owns the row when the system is partitioned. ``od`` is None for rows that
    aggregate over OD pairs.
    """

    template: str
    cell: int
    t: int
    od: int | None


class VariableSpace:
    """Flat index space over the x/y variables of a cell and link subset.

    Occupancy variables come first (cells ascending by id, then t, then od),
    then flow variables (links in network order, then t, then od). The
    mapping between semantic coordinates and flat indices is bijective.
    """

    def __init__(self, network: Network, cell_ids=None, link_indices=None):
        self.network = network
        if cell_ids is None:
            cell_ids = [c.id for c in network.cells]
        if link_indices is None:
            link_indices = list(range(network.n_links))
        self.cell_ids = tuple(sorted(cell_ids))
        self.link_indices = tuple(sorted(link_indices))
        self.horizon = network.horizon
        self.n_od = network.n_od
        self._cell_slot = {c: k for k, c in enumerate(self.cell_ids)}
        self._link_slot = {l: k for k, l in enumerate(self.link_indices)}
        self._block = self.horizon * self.n_od
        self._y_base = len(self.cell_ids) * self._block

    @property
    def size(self) -> int:
        return (len(self.cell_ids) + len(self.link_indices)) * self._block

    @property
    def n_x(self) -> int:
        return self._y_base

    def x_index(self, cell_id: int, t: int, od: int) -> int:
        return self._cell_slot[cell_id] * self._block + t * self.n_od + od

    def y_index(self, link_index: int, t: int, od: int) -> int:
        return (self._y_base + self._link_slot[link_index] * self._block
                + t * self.n_od + od)

    def y_index_pair(self, tail: int, head: int, t: int, od: int) -> int:
        return self.y_index(self.network.link_index(tail, head), t, od)

    def describe(self, flat: int) -> str:
        block, n_od = self._block, self.n_od
        if flat < self._y_base:
            slot, rest = divmod(flat, block)
            t, od = divmod(rest, n_od)
            return f"x[cell={self.cell_ids[slot]}, t={t}, od={od}]"
        slot, rest = divmod(flat - self._y_base, block)
        t, od = divmod(rest, n_od)
        tail, head = self.network.links[self.link_indices[slot]]
        return f"y[link=({tail}, {head}), t={t}, od={od}]"

    def to_global(self, central: "VariableSpace") -> np.ndarray:
        """Flat map from this (sub)space into a central space."""
        out = np.empty(self.size, dtype=np.int64)
        pos = 0
        for cell_id in self.cell_ids:
            for t in range(self.horizon):
                for od in range(self.n_od):
                    out[pos] = central.x_index(cell_id, t, od)
                    pos += 1
        for link in self.link_indices:
            for t in range(self.horizon):
                for od in range(self.n_od):
                    out[pos] = central.y_index(link, t, od)
                    pos += 1
        return out


class ConstraintSystem:
    """Sparse rows ``A v (= | <=) b`` with lower bounds 0 and optional
    zero upper bounds on destination-gated flows."""

    def __init__(self, space: VariableSpace, matrix: sp.csr_matrix,
                 rel: np.ndarray, rhs: np.ndarray,
                 labels: tuple[RowLabel, ...],
                 upper_idx: np.ndarray, upper_val: np.ndarray):
        self.space = space
        self.matrix = matrix
        self.rel = rel
        self.rhs = rhs
        self.labels = labels
        self.upper_idx = upper_idx
        self.upper_val = upper_val
        self._sweep_cache = None

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_vars(self) -> int:
        return self.matrix.shape[1]

    def row(self, r: int):
        start, stop = self.matrix.indptr[r], self.matrix.indptr[r + 1]
        return (self.matrix.indices[start:stop], self.matrix.data[start:stop],
                int(self.rel[r]), float(self.rhs[r]), self.labels[r])

    def sweep_arrays(self):
        """Cached arrays consumed by the projection sweep kernels."""
        if self._sweep_cache is None:
            m = self.matrix
            sqnorm = np.zeros(self.n_rows)
            np.add.at(sqnorm, np.repeat(np.arange(self.n_rows),
                                        np.diff(m.indptr)), m.data ** 2)
            if np.any(sqnorm == 0.0):
                raise ValueError("constraint system contains an empty row")
            self._sweep_cache = (
                m.indptr.astype(np.int64), m.indices.astype(np.int64),
                m.data.astype(np.float64), self.rhs.astype(np.float64),
                (self.rel == EQ).astype(np.uint8), 1.0 / sqnorm,
                np.sqrt(sqnorm), self.upper_idx.astype(np.int64),
                self.upper_val.astype(np.float64))
        return self._sweep_cache


@dataclass(frozen=True)
class LinearObjective:
    """Constant cost vector: tau on every non-sink occupancy variable."""

    coefficients: np.ndarray
    space: VariableSpace


@dataclass(frozen=True)
class FeasibilityReport:
    """Rows and bounds violated beyond a tolerance."""

    violations: tuple[tuple[str, float], ...]
    tolerance: float

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def max_violation(self) -> float:
        return max((v for _, v in self.violations), default=0.0)

    def summary(self, limit: int = 10) -> str:
        if self.ok:
            return f"feasible within {self.tolerance:g}"
        lines = [f"{len(self.violations)} violations beyond {self.tolerance:g}:"]
        lines += [f"  {name}: {amount:.3e}"
                  for name, amount in self.violations[:limit]]
        if len(self.violations) > limit:
            lines.append(f"  ... {len(self.violations) - limit} more")
        return "\n".join(lines)


class _RowBuilder:
    def __init__(self):
        self.indptr = [0]
        self.indices: list[int] = []
        self.data: list[float] = []
        self.rel: list[int] = []
        self.rhs: list[float] = []
        self.labels: list[RowLabel] = []

    def add(self, cols: list[int], vals: list[float], rel: int, rhs: float,
            label: RowLabel):
        self.indices.extend(cols)
        self.data.extend(vals)
        self.indptr.append(len(self.indices))
        self.rel.append(rel)
        self.rhs.append(rhs)
        self.labels.append(label)

    def build(self, space: VariableSpace, upper: dict[int, float]):
        matrix = sp.csr_matrix(
            (np.asarray(self.data, dtype=np.float64),
             np.asarray(self.indices, dtype=np.int32),
             np.asarray(self.indptr, dtype=np.int32)),
            shape=(len(self.rhs), space.size))
        upper_idx = np.fromiter(sorted(upper), dtype=np.int64,
                                count=len(upper))
        upper_val = np.asarray([upper[i] for i in sorted(upper)],
                               dtype=np.float64)
        return ConstraintSystem(
            space, matrix, np.asarray(self.rel, dtype=np.uint8),
            np.asarray(self.rhs, dtype=np.float64), tuple(self.labels),
            upper_idx, upper_val)


def build_central_system(network: Network, signals: SignalSchedule,
                         demand: DemandProfile
                         ) -> tuple[ConstraintSystem, LinearObjective]:
    """Emit the full constraint system and objective for one network."""
    if network.horizon < 1:
        raise NetworkError("horizon must be at least 1")
    if network.n_od == 0:
        raise NetworkError("empty OD set")
    space = VariableSpace(network)
    H, n_od = network.horizon, network.n_od
    rows = _RowBuilder()

    for cell in network.cells:
        preds = network.predecessors[cell.id]
        succs = network.successors[cell.id]
        for t in range(H):
            for od in range(n_od):
                cols, vals = [], []
                if cell.kind != SOURCE:
                    for i in preds:
                        cols.append(space.y_index_pair(i, cell.id, t, od))
                        vals.append(1.0)
                for j in succs:
                    cols.append(space.y_index_pair(cell.id, j, t, od))
                    vals.append(-1.0)
                cols.append(space.x_index(cell.id, t, od))
                vals.append(-1.0)
                if t > 0:
                    cols.append(space.x_index(cell.id, t - 1, od))
                    vals.append(1.0)
                rhs = 0.0
                if cell.kind == SOURCE:
                    rhs = -demand.at(cell.id, t, od)
                rows.add(cols, vals, EQ, rhs,
                         RowLabel("conservation", cell.id, t, od))

    for cell in network.cells:
        succs = network.successors[cell.id]
        if not succs:
            continue
        for t in range(H):
            for od in range(n_od):
                cols = [space.y_index_pair(cell.id, j, t, od) for j in succs]
                vals = [1.0] * len(succs)
                if t > 0:
                    cols.append(space.x_index(cell.id, t - 1, od))
                    vals.append(-1.0)
                rows.add(cols, vals, LE, 0.0,
                         RowLabel("outflow_occupancy", cell.id, t, od))

    for cell in network.cells:
        succs = network.successors[cell.id]
        if not succs:
            continue
        for t in range(H):
            cols = [space.y_index_pair(cell.id, j, t, od)
                    for j in succs for od in range(n_od)]
            rows.add(cols, [1.0] * len(cols), LE, cell.sat_flow,
                     RowLabel("outflow_saturation", cell.id, t, None))

    for cell in network.cells:
        preds = network.predecessors[cell.id]
        if not preds:
            continue
        for t in range(H):
            cols = [space.y_index_pair(i, cell.id, t, od)
                    for i in preds for od in range(n_od)]
            rows.add(cols, [1.0] * len(cols), LE, cell.sat_flow,
                     RowLabel("inflow_saturation", cell.id, t, None))

    delta = network.delta
    for cell in network.cells:
        preds = network.predecessors[cell.id]
        if not preds or cell.kind in (SOURCE, SINK):
            continue
        for t in range(H):
            cols = [space.y_index_pair(i, cell.id, t, od)
                    for i in preds for od in range(n_od)]
            vals = [1.0] * len(cols)
            if t > 0:
                for od in range(n_od):
                    cols.append(space.x_index(cell.id, t - 1, od))
                    vals.append(delta)
            rows.add(cols, vals, LE, delta * cell.max_occupancy,
                     RowLabel("inflow_capacity", cell.id, t, None))

    for cell in network.cells:
        if cell.kind != INTERSECTION:
            continue
        succs = network.successors[cell.id]
        if not succs:
            continue
        for t in range(H):
            cols = [space.y_index_pair(cell.id, j, t, od)
                    for j in succs for od in range(n_od)]
            rows.add(cols, [1.0] * len(cols), LE,
                     effective_sat_flow(network, signals, cell.id, t),
                     RowLabel("signal_saturation", cell.id, t, None))

    # Destination gating: flow of an OD pair may enter its own sink only.
    upper: dict[int, float] = {}
    for od, (_, dest) in enumerate(network.od_pairs):
        for cell in network.cells:
            if cell.kind != SINK or cell.id == dest:
                continue
            for i in network.predecessors[cell.id]:
                for t in range(H):
                    upper[space.y_index_pair(i, cell.id, t, od)] = 0.0

    system = rows.build(space, upper)
    coeffs = np.zeros(space.size)
    for cell in network.cells:
        if cell.kind == SINK:
            continue
        for t in range(H):
            for od in range(n_od):
                coeffs[space.x_index(cell.id, t, od)] = network.tau
    return system, LinearObjective(coefficients=coeffs, space=space)


def check_feasibility(system: ConstraintSystem, values: np.ndarray,
                      tol: float = 1e-9) -> FeasibilityReport:
    """List every row violated beyond ``tol`` and every bound violation."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (system.n_vars,):
        raise ValueError(
            f"expected {system.n_vars} values, got shape {values.shape}")
    residual = system.matrix @ values - system.rhs
    violations: list[tuple[str, float]] = []
    for r in np.nonzero(
            np.where(system.rel == EQ, np.abs(residual), residual) > tol)[0]:
        lbl = system.labels[r]
        amount = abs(residual[r]) if system.rel[r] == EQ else residual[r]
        od = "-" if lbl.od is None else lbl.od
        violations.append(
            (f"{lbl.template}[cell={lbl.cell}, t={lbl.t}, od={od}]",
             float(amount)))
    for j in np.nonzero(values < -tol)[0]:
        violations.append((f"lower_bound[{system.space.describe(int(j))}]",
                           float(-values[j])))
    if system.upper_idx.size:
        over = values[system.upper_idx] - system.upper_val
        for k in np.nonzero(over > tol)[0]:
            j = int(system.upper_idx[k])
            violations.append(
                (f"upper_bound[{system.space.describe(j)}]", float(over[k])))
    return FeasibilityReport(tuple(violations), tol)


def evaluate_objective(objective: LinearObjective,
                       values: np.ndarray) -> float:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != objective.coefficients.shape:
        raise ValueError(
            f"expected {objective.coefficients.shape[0]} values, "
            f"got shape {values.shape}")
    return float(objective.coefficients @ values)


def trace_to_vector(space: VariableSpace, x: np.ndarray,
                    y: np.ndarray) -> np.ndarray:
    """Flatten dense (cells, H, od) / (links, H, od) arrays into the space."""
    if space.cell_ids != tuple(c.id for c in space.network.cells):
        raise ValueError("trace flattening requires the central space")
    out = np.empty(space.size)
    out[:space.n_x] = x.reshape(-1)
    out[space.n_x:] = y.reshape(-1)
    return out
