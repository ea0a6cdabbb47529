"""Shortest-path routing and nonlinear cell-transmission simulation.

The simulation seeds the distributed solver with a feasible operating point:
each OD pair is routed along its minimum-hop path, demand is injected at the
origins, and vehicles advance under the classic sending/receiving flow rules.
Flows are recorded per step so the result maps one-to-one onto the decision
variables of the optimization model. Occupancy at step t means occupancy at
the end of step t; flow at step t happens during step t and is limited by the
occupancy left at the end of step t-1 (the network starts empty).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NetworkError
from .network import (INTERSECTION, SINK, SOURCE, DemandProfile, Network,
                      SignalSchedule)


@dataclass(frozen=True)
class Path:
    """Cell sequence from an OD origin to its destination sink."""

    od: tuple[int, int]
    cells: tuple[int, ...]

    @property
    def hops(self) -> int:
        return len(self.cells) - 1


@dataclass(frozen=True)
class SimTrace:
    """Dense simulation record.

    ``x[c, t, od]`` is the occupancy of the cell at position ``c`` at the end
    of step ``t``; ``y[l, t, od]`` is the flow moved across link ``l`` during
    step ``t``. Positions follow the network's ascending cell-id / sorted-link
    order.
    """

    x: np.ndarray
    y: np.ndarray


def shortest_paths(network: Network) -> dict[tuple[int, int], Path]:
    """Minimum-hop path for every OD pair.

    Free-flow cost counts cells (one step per cell). Ties are broken toward
    the lexicographically smallest cell-id sequence: walk from the origin and
    always take the smallest successor that still lies on a shortest path.
    """
    paths = {}
    for origin, dest in network.od_pairs:
        dist = _distance_to(network, dest)
        if origin not in dist:
            raise NetworkError(
                f"OD destination {dest} unreachable from origin {origin}")
        cells = [origin]
        cur = origin
        while cur != dest:
            nxt = min(j for j in network.successors[cur]
                      if dist.get(j, -1) == dist[cur] - 1)
            cells.append(nxt)
            cur = nxt
        paths[(origin, dest)] = Path(od=(origin, dest), cells=tuple(cells))
    return paths


def _distance_to(network: Network, dest: int) -> dict[int, int]:
    # Unit link costs: breadth-first search on reversed links.
    dist = {dest: 0}
    frontier = [dest]
    while frontier:
        nxt_frontier = []
        for cell in frontier:
            for prev in network.predecessors[cell]:
                if prev not in dist:
                    dist[prev] = dist[cell] + 1
                    nxt_frontier.append(prev)
        frontier = nxt_frontier
    return dist


def simulate(network: Network, signals: SignalSchedule,
             demand: DemandProfile,
             paths: dict[tuple[int, int], Path]) -> SimTrace:
    """Propagate demand along fixed paths under CTM flow rules.

    Per step and link, the moved flow is the smaller of what upstream can
    send (queued vehicles, saturation flow, signal gating) and what
    downstream can receive (saturation flow, ``delta``-scaled spare
    occupancy). When several ODs compete for one link the flow is split in
    proportion to each OD's queued vehicles; when several links compete for
    one cell's sending or receiving budget the link flows are scaled down
    proportionally. Sources queue without bound and sinks absorb without
    bound, so vehicles are never lost.
    """
    n_cells, n_links = network.n_cells, network.n_links
    H, n_od = network.horizon, network.n_od
    x = np.zeros((n_cells, H, n_od))
    y = np.zeros((n_links, H, n_od))

    # next_cell[od][cell_id] -> successor on that OD's path
    next_cell: list[dict[int, int]] = []
    for od_idx, od in enumerate(network.od_pairs):
        path = paths[od]
        if path.od != od:
            raise NetworkError(f"path keyed {od} routes {path.od}")
        next_cell.append({path.cells[i]: path.cells[i + 1]
                          for i in range(len(path.cells) - 1)})

    occ = np.zeros((n_cells, n_od))  # occupancy at end of previous step
    for t in range(H):
        # Queued vehicles per link and OD.
        desired = np.zeros(n_links)
        queued = np.zeros((n_links, n_od))
        for od_idx in range(n_od):
            for cell_id, succ in next_cell[od_idx].items():
                q = occ[network.cell_position(cell_id), od_idx]
                if q > 0.0:
                    link = network.link_index(cell_id, succ)
                    queued[link, od_idx] = q
                    desired[link] += q

        flow = desired.copy()
        # Stage 1: shared sending budget per tail cell.
        for cell in network.cells:
            out_links = [network.link_index(cell.id, j)
                         for j in network.successors[cell.id]]
            if not out_links:
                continue
            budget = cell.sat_flow
            if cell.kind == INTERSECTION and not signals.is_green(cell.id, t):
                budget = 0.0
            total = sum(flow[l] for l in out_links)
            if total > budget:
                scale = budget / total
                for l in out_links:
                    flow[l] *= scale
        # Stage 2: shared receiving budget per head cell.
        for cell in network.cells:
            in_links = [network.link_index(i, cell.id)
                        for i in network.predecessors[cell.id]]
            if not in_links:
                continue
            budget = cell.sat_flow
            if cell.kind not in (SOURCE, SINK):
                spare = network.delta * (
                    cell.max_occupancy
                    - occ[network.cell_position(cell.id)].sum())
                budget = min(budget, max(spare, 0.0))
            total = sum(flow[l] for l in in_links)
            if total > budget:
                scale = budget / total
                for l in in_links:
                    flow[l] *= scale

        # Split per OD and advance occupancies.
        for link in range(n_links):
            if flow[link] <= 0.0 or desired[link] <= 0.0:
                continue
            tail, head = network.links[link]
            tp, hp = network.cell_position(tail), network.cell_position(head)
            for od_idx in range(n_od):
                if queued[link, od_idx] > 0.0:
                    moved = flow[link] * (queued[link, od_idx] / desired[link])
                    y[link, t, od_idx] = moved
                    occ[tp, od_idx] -= moved
                    occ[hp, od_idx] += moved

        for (cell_id, dt, od_idx), value in demand.entries.items():
            if dt == t:
                occ[network.cell_position(cell_id), od_idx] += value
        x[:, t, :] = occ
    return SimTrace(x=x, y=y)


def total_travel_time(trace: SimTrace, network: Network) -> float:
    """Vehicle-hours spent outside sink cells over the whole horizon."""
    non_sink = [network.cell_position(c.id) for c in network.cells
                if c.kind != SINK]
    vehicle_steps = float(trace.x[non_sink].sum())
    return network.tau * vehicle_steps / 3600.0
