"""Split the central program into intersection-level sub-problems.

Every cell belongs to exactly one region. A region's sub-problem keeps the
occupancy variables of its own cells plus the flow variables of every link
touching one of its cells; each constraint row follows the cell it is indexed
by. Rows only ever reference variables of their own region's sub-problem, so
the sub-problems share no constraints. The one overlap is flow variables on
boundary links (tail in one region, head in another): both regions hold their
own copy, and the consensus step pulls the copies together.

Regions that share at least one variable are neighbors in the exchange
graph. Arc weights must be symmetric, positive, and bounded away from zero
and infinity, and each node's self-weight is minus the sum of its arc
weights; the graph must be connected. The default rule puts weight 1 on
every arc.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .errors import PartitionError
from .formulation import ConstraintSystem, LinearObjective, VariableSpace
from .network import Network


@dataclass(frozen=True)
class SharedVariableBlock:
    """Copies of the same central variables held by this and one neighbor
    sub-problem: aligned local/remote flat indices plus the occupancy
    normalizer used by the disagreement measure."""

    neighbor: int
    local_idx: np.ndarray
    remote_idx: np.ndarray
    norm: np.ndarray


@dataclass(frozen=True)
class SubProblem:
    id: int
    cell_ids: tuple[int, ...]
    link_indices: tuple[int, ...]
    space: VariableSpace
    system: ConstraintSystem
    objective: np.ndarray
    map_to_global: np.ndarray
    shared_blocks: tuple[SharedVariableBlock, ...]
    boundary_links: tuple[tuple[int, int], ...]  # (link index, other region)

    @property
    def n_vars(self) -> int:
        return self.space.size


def normalize_assignment(network: Network,
                         assignment: Mapping[int, int]) -> dict[int, int]:
    """Validate a cell -> region map: total, no unknown cells, no empty
    regions."""
    cleaned = {}
    for cell_id, region in assignment.items():
        cell_id = int(cell_id)
        network.cell(cell_id)  # raises on unknown id
        cleaned[cell_id] = int(region)
    missing = [c.id for c in network.cells if c.id not in cleaned]
    if missing:
        raise PartitionError(f"cells without a region: {missing}")
    return cleaned


def partition(system: ConstraintSystem, objective: LinearObjective,
              assignment: Mapping[int, int]) -> list[SubProblem]:
    """Split a central system into per-region sub-problems."""
    space = system.space
    network = space.network
    if space.cell_ids != tuple(c.id for c in network.cells):
        raise PartitionError("partition requires the central variable space")
    assignment = normalize_assignment(network, assignment)
    regions = sorted(set(assignment.values()))

    cells_of: dict[int, list[int]] = {r: [] for r in regions}
    for cell in network.cells:
        cells_of[assignment[cell.id]].append(cell.id)
    for r in regions:
        if not cells_of[r]:
            raise PartitionError(f"region {r} owns no cells")

    links_of: dict[int, list[int]] = {r: [] for r in regions}
    boundary: dict[int, list[tuple[int, int]]] = {r: [] for r in regions}
    for link, (tail, head) in enumerate(network.links):
        r_tail, r_head = assignment[tail], assignment[head]
        links_of[r_tail].append(link)
        if r_head != r_tail:
            links_of[r_head].append(link)
            boundary[r_tail].append((link, r_head))
            boundary[r_head].append((link, r_tail))

    spaces = {r: VariableSpace(network, cells_of[r], sorted(links_of[r]))
              for r in regions}
    maps = {r: spaces[r].to_global(space) for r in regions}
    g2l = {}
    for r in regions:
        lookup = np.full(space.size, -1, dtype=np.int64)
        lookup[maps[r]] = np.arange(maps[r].size)
        g2l[r] = lookup

    # Rows follow the cell they are indexed by.
    row_region = np.fromiter(
        (assignment[lbl.cell] for lbl in system.labels), dtype=np.int64,
        count=system.n_rows)
    central = system.matrix
    subproblems = []
    for r in regions:
        rows = np.nonzero(row_region == r)[0]
        local = central[rows]
        local_cols = g2l[r][local.indices]
        if (local_cols < 0).any():
            raise PartitionError(
                f"region {r} row references a variable outside the region")
        matrix = sp.csr_matrix(
            (local.data, local_cols, local.indptr),
            shape=(rows.size, spaces[r].size))
        upper_pairs = [
            (int(g2l[r][gi]), float(uv))
            for gi, uv in zip(system.upper_idx, system.upper_val)
            if g2l[r][gi] >= 0]
        upper_idx = np.asarray([i for i, _ in upper_pairs], dtype=np.int64)
        upper_val = np.asarray([u for _, u in upper_pairs], dtype=np.float64)
        sub_system = ConstraintSystem(
            spaces[r], matrix, system.rel[rows].copy(),
            system.rhs[rows].copy(),
            tuple(system.labels[i] for i in rows), upper_idx, upper_val)
        subproblems.append(SubProblem(
            id=r,
            cell_ids=tuple(cells_of[r]),
            link_indices=tuple(sorted(links_of[r])),
            space=spaces[r],
            system=sub_system,
            objective=objective.coefficients[maps[r]].copy(),
            map_to_global=maps[r],
            shared_blocks=(),
            boundary_links=tuple(sorted(boundary[r])),
        ))

    # Align shared flow copies between co-owner pairs.
    by_id = {s.id: s for s in subproblems}
    blocks: dict[int, list[SharedVariableBlock]] = {r: [] for r in regions}
    H, n_od = network.horizon, network.n_od
    for link, (tail, head) in enumerate(network.links):
        r_tail, r_head = assignment[tail], assignment[head]
        if r_tail == r_head:
            continue
        m_tail = network.cell(tail).max_occupancy
        m_head = network.cell(head).max_occupancy
        norm_value = max(m_tail, m_head)
        if not norm_value > 0:
            raise PartitionError(
                f"boundary link ({tail}, {head}) has no positive occupancy "
                f"bound to normalize disagreement")
        for a, b in ((r_tail, r_head), (r_head, r_tail)):
            loc = np.asarray(
                [by_id[a].space.y_index(link, t, od)
                 for t in range(H) for od in range(n_od)], dtype=np.int64)
            rem = np.asarray(
                [by_id[b].space.y_index(link, t, od)
                 for t in range(H) for od in range(n_od)], dtype=np.int64)
            blocks[a].append(SharedVariableBlock(
                neighbor=b, local_idx=loc, remote_idx=rem,
                norm=np.full(loc.size, norm_value)))

    final = []
    for s in subproblems:
        merged = _merge_blocks(blocks[s.id])
        final.append(SubProblem(
            id=s.id, cell_ids=s.cell_ids, link_indices=s.link_indices,
            space=s.space, system=s.system, objective=s.objective,
            map_to_global=s.map_to_global, shared_blocks=merged,
            boundary_links=s.boundary_links))
    return final


def _merge_blocks(parts: list[SharedVariableBlock]
                  ) -> tuple[SharedVariableBlock, ...]:
    merged: dict[int, list[SharedVariableBlock]] = {}
    for blk in parts:
        merged.setdefault(blk.neighbor, []).append(blk)
    out = []
    for neighbor in sorted(merged):
        group = merged[neighbor]
        out.append(SharedVariableBlock(
            neighbor=neighbor,
            local_idx=np.concatenate([b.local_idx for b in group]),
            remote_idx=np.concatenate([b.remote_idx for b in group]),
            norm=np.concatenate([b.norm for b in group])))
    return tuple(out)


def shared_link_set(subproblems: list[SubProblem]
                    ) -> dict[tuple[int, int], tuple[int, int]]:
    """Map each boundary link (tail, head) to its ordered co-owner pair."""
    network = subproblems[0].space.network
    owner = {}
    for s in subproblems:
        for cell_id in s.cell_ids:
            owner[cell_id] = s.id
    shared = {}
    for s in subproblems:
        for link, other in s.boundary_links:
            tail, head = network.links[link]
            shared[(tail, head)] = (owner[tail], owner[head])
    return shared


@dataclass(frozen=True)
class ExchangeGraph:
    """Symmetric weighted communication graph over sub-problems.

    ``weights`` holds off-diagonal arc weights and negative self-weights;
    a node's neighborhood includes itself.
    """

    nodes: tuple[int, ...]
    weights: dict[tuple[int, int], float]

    def weight(self, source: int, target: int) -> float:
        return self.weights.get((source, target), 0.0)

    def neighbors(self, node: int) -> tuple[int, ...]:
        out = [b for (a, b), w in self.weights.items()
               if a == node and b != node and w != 0.0]
        return tuple(sorted(out)) + (node,)

    def degree(self, node: int) -> int:
        return len(self.neighbors(node)) - 1


def build_exchange_graph(subproblems: list[SubProblem],
                         weight_rule: float | Mapping[tuple[int, int], float]
                         | None = None,
                         theta: float | None = None,
                         theta_prime: float | None = None) -> ExchangeGraph:
    """Build and validate the exchange graph of a partition.

    ``weight_rule`` is either a uniform positive arc weight (default 1.0) or
    an explicit map ``(s, s') -> w`` covering every sharing pair in both
    directions. Validation enforces: arcs exactly between sharing pairs,
    symmetry, positive off-diagonal weights within [theta, theta_prime],
    self-weights equal to minus the node's arc-weight sum, and connectivity.
    """
    nodes = tuple(sorted(s.id for s in subproblems))
    adjacency: set[tuple[int, int]] = set()
    for s in subproblems:
        for blk in s.shared_blocks:
            adjacency.add((s.id, blk.neighbor))

    weights: dict[tuple[int, int], float] = {}
    if weight_rule is None or isinstance(weight_rule, (int, float)):
        value = 1.0 if weight_rule is None else float(weight_rule)
        if not value > 0:
            raise PartitionError(f"arc weight must be positive, got {value}")
        for arc in adjacency:
            weights[arc] = value
    else:
        extra = set(weight_rule) - adjacency
        if extra:
            raise PartitionError(
                f"weights given for non-sharing pairs: {sorted(extra)}")
        missing = adjacency - set(weight_rule)
        if missing:
            raise PartitionError(
                f"missing weights for sharing pairs: {sorted(missing)}")
        for arc in adjacency:
            weights[arc] = float(weight_rule[arc])

    for a, b in sorted(adjacency):
        w_ab, w_ba = weights[(a, b)], weights.get((b, a))
        if w_ba is None or w_ab != w_ba:
            raise PartitionError(
                f"asymmetric weights between {a} and {b}: {w_ab} vs {w_ba}")
        if not w_ab > 0:
            raise PartitionError(
                f"weight between {a} and {b} must be positive, got {w_ab}")

    off = [w for (a, b), w in weights.items() if a != b]
    lo = min(off) if off else 1.0
    hi = max(off) if off else 1.0
    theta = lo if theta is None else float(theta)
    theta_prime = hi if theta_prime is None else float(theta_prime)
    if not 0 < theta <= theta_prime:
        raise PartitionError(
            f"invalid weight bounds: theta={theta}, theta_prime={theta_prime}")
    for (a, b), w in weights.items():
        if not theta <= w <= theta_prime:
            raise PartitionError(
                f"weight {w} on arc ({a}, {b}) outside [{theta}, {theta_prime}]")

    for node in nodes:
        weights[(node, node)] = -sum(
            w for (a, b), w in weights.items() if a == node and b != node)

    # Connectivity over the sharing arcs.
    if nodes:
        seen = {nodes[0]}
        queue = deque([nodes[0]])
        while queue:
            cur = queue.popleft()
            for (a, b) in adjacency:
                if a == cur and b not in seen:
                    seen.add(b)
                    queue.append(b)
        if set(nodes) - seen:
            raise PartitionError(
                f"exchange graph disconnected: {sorted(set(nodes) - seen)} "
                f"unreachable from {nodes[0]}")
    return ExchangeGraph(nodes=nodes, weights=weights)
