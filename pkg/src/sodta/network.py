"""Cell-based road network model.

A network is a directed graph of cells. Each cell represents a road segment
that a vehicle traverses in exactly one time step at free flow. Cells carry
two physical parameters: ``max_occupancy`` (how many vehicles fit in the
cell) and ``sat_flow`` (how many vehicles can leave the cell per step).
Source cells inject demand and hold an unbounded upstream queue, sink cells
absorb vehicles without capacity limits, and intersection cells have their
discharge gated by a signal schedule. Diverge cells behave like ordinary
cells with several successors.

Demand is a sparse table of vehicles entering the network: origin cell,
departure step, origin-destination pair. Signals are a sparse set of
(intersection cell, step) pairs that are green; an absent schedule means
always green.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import NetworkError

ORDINARY = "ordinary"
SOURCE = "source"
SINK = "sink"
INTERSECTION = "intersection"
DIVERGE = "diverge"

CELL_KINDS = (ORDINARY, SOURCE, SINK, INTERSECTION, DIVERGE)


@dataclass(frozen=True)
class Cell:
    """One road segment, traversable in a single time step.

    Parameters
    ----------
    id : int
        Unique integer identifier.
    kind : str
        One of ``ordinary``, ``source``, ``sink``, ``intersection``,
        ``diverge``.
    max_occupancy : float
        Vehicles the cell can hold. Stored for every cell; enforcement is
        skipped for sources (unbounded queue) and sinks (unbounded
        absorption).
    sat_flow : float
        Saturation flow: vehicles that can cross the cell boundary per step.
    """

    id: int
    kind: str
    max_occupancy: float
    sat_flow: float

    def __post_init__(self):
        if not isinstance(self.id, int):
            raise NetworkError(f"cell id {self.id!r} is not an integer")
        if self.kind not in CELL_KINDS:
            raise NetworkError(f"cell {self.id}: unknown kind {self.kind!r}")
        if self.kind not in (SOURCE, SINK) and not self.max_occupancy > 0:
            raise NetworkError(
                f"cell {self.id}: max_occupancy must be positive, "
                f"got {self.max_occupancy!r}")
        if not self.sat_flow >= 0:
            raise NetworkError(
                f"cell {self.id}: sat_flow must be nonnegative, "
                f"got {self.sat_flow!r}")


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable cell network with validated topology.

    Attributes
    ----------
    cells : tuple of Cell
        Sorted by ascending id.
    links : tuple of (int, int)
        Directed cell connectors, sorted by (tail, head).
    delta : float
        Ratio of free-flow speed to backward wave speed; scales how much
        spare occupancy downstream converts into receivable flow.
    tau : float
        Seconds per time step.
    horizon : int
        Number of time steps.
    od_pairs : tuple of (int, int)
        Origin/destination cell ids, in input order.
    """

    cells: tuple[Cell, ...]
    links: tuple[tuple[int, int], ...]
    successors: dict[int, tuple[int, ...]]
    predecessors: dict[int, tuple[int, ...]]
    delta: float
    tau: float
    horizon: int
    od_pairs: tuple[tuple[int, int], ...]
    _by_id: dict[int, Cell] = field(repr=False, default_factory=dict)
    _cell_pos: dict[int, int] = field(repr=False, default_factory=dict)
    _link_pos: dict[tuple[int, int], int] = field(repr=False,
                                                  default_factory=dict)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_links(self) -> int:
        return len(self.links)

    @property
    def n_od(self) -> int:
        return len(self.od_pairs)

    def cell(self, cell_id: int) -> Cell:
        try:
            return self._by_id[cell_id]
        except KeyError:
            raise NetworkError(f"unknown cell id {cell_id}") from None

    def cell_position(self, cell_id: int) -> int:
        """Dense 0-based position of a cell in ascending-id order."""
        try:
            return self._cell_pos[cell_id]
        except KeyError:
            raise NetworkError(f"unknown cell id {cell_id}") from None

    def link_index(self, tail: int, head: int) -> int:
        try:
            return self._link_pos[(tail, head)]
        except KeyError:
            raise NetworkError(f"no link from {tail} to {head}") from None

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        mine = (self.cells, self.links, self.delta, self.tau, self.horizon,
                self.od_pairs)
        theirs = (other.cells, other.links, other.delta, other.tau,
                  other.horizon, other.od_pairs)
        return mine == theirs

    __hash__ = object.__hash__

    def cell_ids(self) -> frozenset[int]:
        return frozenset(self._by_id)

    def kind(self, cell_id: int) -> str:
        return self.cell(cell_id).kind

    def is_intersection(self, cell_id: int) -> bool:
        return self.cell(cell_id).kind == INTERSECTION


@dataclass(frozen=True)
class SignalSchedule:
    """Sparse green-phase table. ``green=None`` means always green."""

    green: frozenset[tuple[int, int]] | None = None

    def is_green(self, cell_id: int, t: int) -> bool:
        return self.green is None or (cell_id, t) in self.green


@dataclass(frozen=True)
class DemandProfile:
    """Sparse demand table: (origin cell, departure step, od index) -> vehicles."""

    entries: dict[tuple[int, int, int], float]

    def at(self, cell_id: int, t: int, od: int) -> float:
        return self.entries.get((cell_id, t, od), 0.0)

    def total(self, od: int | None = None) -> float:
        if od is None:
            return sum(self.entries.values())
        return sum(v for (_, _, o), v in self.entries.items() if o == od)

    def scaled(self, factor: float) -> "DemandProfile":
        return DemandProfile({k: v * factor for k, v in self.entries.items()})


def build_network(cells: Iterable[Cell],
                  links: Iterable[tuple[int, int]],
                  delta: float,
                  tau: float,
                  horizon: int,
                  od_pairs: Sequence[tuple[int, int]]) -> Network:
    """Validate topology and return an immutable :class:`Network`.

    Raises
    ------
    NetworkError
        On duplicate cell ids, dangling or duplicate links, self-loops,
        sinks with successors, sources with predecessors, nonpositive
        delta/tau, horizon < 1, bad OD endpoints, or an OD destination
        unreachable from its origin.
    """
    cell_list = sorted(cells, key=lambda c: c.id)
    by_id: dict[int, Cell] = {}
    for c in cell_list:
        if c.id in by_id:
            raise NetworkError(f"duplicate cell id {c.id}")
        by_id[c.id] = c

    seen = set()
    link_list = []
    for tail, head in links:
        if tail == head:
            raise NetworkError(f"self-loop link on cell {tail}")
        if tail not in by_id or head not in by_id:
            raise NetworkError(f"link ({tail}, {head}) has a dangling endpoint")
        if (tail, head) in seen:
            raise NetworkError(f"duplicate link ({tail}, {head})")
        seen.add((tail, head))
        link_list.append((int(tail), int(head)))
    link_list.sort()

    succ: dict[int, list[int]] = {c.id: [] for c in cell_list}
    pred: dict[int, list[int]] = {c.id: [] for c in cell_list}
    for tail, head in link_list:
        succ[tail].append(head)
        pred[head].append(tail)

    for c in cell_list:
        if c.kind == SINK and succ[c.id]:
            raise NetworkError(f"sink cell {c.id} has successors {succ[c.id]}")
        if c.kind == SOURCE and pred[c.id]:
            raise NetworkError(
                f"source cell {c.id} has predecessors {pred[c.id]}")

    if not delta > 0:
        raise NetworkError(f"delta must be positive, got {delta!r}")
    if not tau > 0:
        raise NetworkError(f"tau must be positive, got {tau!r}")
    if not isinstance(horizon, int) or horizon < 1:
        raise NetworkError(f"horizon must be a positive integer, got {horizon!r}")

    # Repeated (origin, dest) entries are allowed: each position is a
    # distinct commodity label, e.g. vehicle classes sharing one OD.
    od_list = []
    for origin, dest in od_pairs:
        origin, dest = int(origin), int(dest)
        if origin not in by_id or dest not in by_id:
            raise NetworkError(f"OD pair ({origin}, {dest}) references unknown cells")
        if by_id[origin].kind != SOURCE:
            raise NetworkError(f"OD origin {origin} is not a source cell")
        if by_id[dest].kind != SINK:
            raise NetworkError(f"OD destination {dest} is not a sink cell")
        od_list.append((origin, dest))

    network = Network(
        cells=tuple(cell_list),
        links=tuple(link_list),
        successors={i: tuple(sorted(s)) for i, s in succ.items()},
        predecessors={i: tuple(sorted(p)) for i, p in pred.items()},
        delta=float(delta),
        tau=float(tau),
        horizon=int(horizon),
        od_pairs=tuple(od_list),
        _by_id=by_id,
        _cell_pos={c.id: pos for pos, c in enumerate(cell_list)},
        _link_pos={lk: pos for pos, lk in enumerate(link_list)},
    )

    for origin, dest in od_list:
        if not _reaches(network, origin, dest):
            raise NetworkError(
                f"OD destination {dest} unreachable from origin {origin}")
    return network


def _reaches(network: Network, origin: int, dest: int) -> bool:
    # Sinks have no successors, so paths cannot pass through other sinks.
    stack = [origin]
    visited = {origin}
    while stack:
        cur = stack.pop()
        if cur == dest:
            return True
        for nxt in network.successors[cur]:
            if nxt not in visited:
                visited.add(nxt)
                stack.append(nxt)
    return False


def effective_sat_flow(network: Network, signals: SignalSchedule,
                       cell_id: int, t: int) -> float:
    """Signal-gated discharge limit of an intersection cell at step ``t``."""
    cell = network.cell(cell_id)
    if cell.kind != INTERSECTION:
        raise NetworkError(
            f"cell {cell_id} is {cell.kind!r}, not an intersection")
    if not 0 <= t < network.horizon:
        raise NetworkError(f"time step {t} outside horizon {network.horizon}")
    return cell.sat_flow if signals.is_green(cell_id, t) else 0.0


def validate_demand(network: Network, demand: DemandProfile) -> list[str]:
    """Return a list of demand violations (empty when valid).

    Checks: nonnegative volumes, known cells, departure steps inside the
    horizon, od indices in range, and that every entry sits at the origin
    cell of its OD pair.
    """
    problems = []
    for (cell_id, t, od), value in sorted(demand.entries.items()):
        where = f"demand[cell={cell_id}, t={t}, od={od}]"
        if value < 0:
            problems.append(f"{where}: negative volume {value}")
        if cell_id not in network._by_id:
            problems.append(f"{where}: unknown cell")
            continue
        if not 0 <= t < network.horizon:
            problems.append(f"{where}: departure step outside horizon")
        if not 0 <= od < network.n_od:
            problems.append(f"{where}: od index out of range")
            continue
        origin = network.od_pairs[od][0]
        if cell_id != origin:
            problems.append(
                f"{where}: entry not at origin cell {origin} of its OD pair")
    return problems
