"""Distributed gradient solver over partitioned traffic-assignment programs.

Iteration k+1, per sub-problem: start from the current local values, add the
consensus pull ``alpha(k+1) * sum of w * (neighbor copy - own copy)`` on every
shared variable, subtract ``gamma(k+1) * gradient`` (the gradient of the
linear objective is constant), then project back onto the sub-problem's
feasible set. All sub-problems read the same snapshot of iteration k and
write iteration k+1 behind a barrier, so results do not depend on execution
order or thread count.

A sub-problem freezes once its disagreement (normalized gap between its
boundary-flow copies and the co-owners' copies) drops to epsilon, thaws if
the disagreement rises above epsilon again, and the run terminates when all
sub-problems are below epsilon at the same iteration.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .ctm import shortest_paths, simulate
from .errors import CheckpointError, PartitionError
from .formulation import build_central_system, evaluate_objective, \
    trace_to_vector
from .network import DemandProfile, Network, SignalSchedule
from .partition import ExchangeGraph, SubProblem, build_exchange_graph, \
    partition
from .projection import ProjectionWorkspace, project


@dataclass(frozen=True)
class StepSchedule:
    """Diminishing consensus (alpha) and gradient (gamma) step sizes.

    The defaults ``alpha(k) = k**-0.55`` and ``gamma(k) = 1/k`` satisfy the
    convergence conditions checked by :func:`validate_power_exponents`.
    """

    name: str
    alpha: Callable[[int], float]
    gamma: Callable[[int], float]

    @staticmethod
    def power(alpha_exponent: float = 0.55, gamma_exponent: float = 1.0,
              alpha_scale: float = 1.0, gamma_scale: float = 1.0
              ) -> "StepSchedule":
        validate_power_exponents(alpha_exponent, gamma_exponent)
        if not (alpha_scale > 0 and gamma_scale > 0):
            raise ValueError("step scales must be positive")
        return StepSchedule(
            name=f"power({alpha_exponent:g}, {gamma_exponent:g})",
            alpha=lambda k: alpha_scale * k ** (-alpha_exponent),
            gamma=lambda k: gamma_scale * k ** (-gamma_exponent))


def validate_power_exponents(alpha_exponent: float,
                             gamma_exponent: float) -> None:
    """Check the summability conditions for power-law step schedules.

    For alpha(k) = k^-a and gamma(k) = k^-g the required series behave as:
    sum alpha = sum gamma = infinity needs a <= 1 and g <= 1; sum alpha^2
    and sum gamma^2 finite need a > 1/2 and g > 1/2 (this also makes
    sum alpha^2 gamma^2 finite); sum gamma^2 / alpha finite needs
    2g - a > 1; sum min(alpha, gamma) = infinity follows from the first
    pair. Positive scale factors do not change any of these.
    """
    a, g = float(alpha_exponent), float(gamma_exponent)
    if not 0.5 < a <= 1.0:
        raise ValueError(
            f"alpha exponent {a} outside (0.5, 1]: consensus steps must "
            f"diminish but keep an infinite sum")
    if not 0.5 < g <= 1.0:
        raise ValueError(
            f"gamma exponent {g} outside (0.5, 1]: gradient steps must "
            f"diminish but keep an infinite sum")
    if not 2.0 * g - a > 1.0:
        raise ValueError(
            f"exponents a={a}, g={g} violate 2g - a > 1: gradient noise "
            f"must vanish relative to the consensus steps")


@dataclass
class SolverConfig:
    epsilon: float = 0.5
    max_iterations: int = 5000
    schedule: StepSchedule = field(
        default_factory=lambda: StepSchedule.power())
    weight_rule: float | Mapping[tuple[int, int], float] | None = None
    theta: float | None = None
    theta_prime: float | None = None
    projection_tolerance: float = 1e-6
    projection_max_sweeps: int = 10_000
    checkpoint_interval: int = 0
    threads: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be nonnegative")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class IterationState:
    """Snapshot of one barrier iteration (k = 0 is the initialization)."""

    k: int
    values: dict[int, np.ndarray]
    workspaces: dict[int, ProjectionWorkspace]
    frozen: dict[int, bool]
    disagreements: dict[int, float]
    wall_ms: dict[int, float]


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    subproblem: int
    objective_hr: float
    disagreement: float
    wall_ms: float


@dataclass
class RunTrace:
    rows: list[TraceRow]
    final_values: np.ndarray    # feasible for the central system
    averaged_values: np.ndarray  # raw co-owner average behind final_values
    termination: str            # "consensus" or "max_iterations"
    iterations: int
    objective_hr: float
    subproblem_objectives_hr: dict[int, float]
    disagreements: dict[int, float]


def gradient(subproblem: SubProblem) -> np.ndarray:
    """Gradient of the sub-problem's objective slice: constant, tau on each
    non-sink occupancy variable the sub-problem owns, zero elsewhere."""
    return subproblem.objective.copy()


def consensus_gradient_step(state: IterationState, subproblem: SubProblem,
                            graph: ExchangeGraph,
                            schedule: StepSchedule) -> np.ndarray:
    """Pre-projection update for iteration ``state.k + 1``.

    Exclusive variables move only along the negative gradient; shared
    variables additionally feel the weighted pull toward each co-owner's
    copy. The weights over each variable's co-owner set sum to zero (own
    copy carries minus the arc-weight sum), so a consensus among copies is a
    fixed point of the pull.
    """
    k_next = state.k + 1
    alpha = schedule.alpha(k_next)
    gamma = schedule.gamma(k_next)
    own = state.values[subproblem.id]
    aux = own.copy()
    for blk in subproblem.shared_blocks:
        if blk.neighbor not in state.values:
            raise PartitionError(
                f"sub-problem {subproblem.id} needs a snapshot of neighbor "
                f"{blk.neighbor}")
        w = graph.weight(blk.neighbor, subproblem.id)
        remote = state.values[blk.neighbor][blk.remote_idx]
        aux[blk.local_idx] += alpha * w * (remote - own[blk.local_idx])
    aux -= gamma * subproblem.objective
    return aux


def disagreement(state: IterationState, subproblem: SubProblem,
                 shared_blocks: Iterable = None) -> float:
    """Normalized distance between this sub-problem's boundary-flow copies
    and its co-owners' copies: sum over shared variables of
    ``|own/norm - remote/norm|`` with ``norm = max`` occupancy bound of the
    link's endpoint cells."""
    blocks = subproblem.shared_blocks if shared_blocks is None \
        else tuple(shared_blocks)
    own = state.values[subproblem.id]
    total = 0.0
    for blk in blocks:
        remote = state.values[blk.neighbor][blk.remote_idx]
        total += float(np.abs(own[blk.local_idx] / blk.norm
                              - remote / blk.norm).sum())
    return total


def superstep(state: IterationState, subproblems: list[SubProblem],
              graph: ExchangeGraph, schedule: StepSchedule,
              pool: ThreadPoolExecutor | None = None) -> IterationState:
    """Advance every non-frozen sub-problem one iteration behind a barrier.

    All consensus reads use the ``state`` snapshot; projections run
    independently (optionally in ``pool``) and never touch shared state, so
    the result is identical for any execution order.
    """
    aux: dict[int, np.ndarray] = {}
    for sub in subproblems:
        if not state.frozen[sub.id]:
            aux[sub.id] = consensus_gradient_step(state, sub, graph, schedule)

    def advance(sub: SubProblem) -> tuple[int, np.ndarray, float]:
        if state.frozen[sub.id]:
            return sub.id, state.values[sub.id], 0.0
        begin = time.perf_counter()
        vals = project(aux[sub.id], sub.system, state.workspaces[sub.id])
        return sub.id, vals, (time.perf_counter() - begin) * 1000.0

    if pool is None:
        results = [advance(sub) for sub in subproblems]
    else:
        results = list(pool.map(advance, subproblems))

    new_values = {sid: vals for sid, vals, _ in results}
    wall = {sid: ms for sid, _, ms in results}
    new_state = IterationState(
        k=state.k + 1, values=new_values, workspaces=state.workspaces,
        frozen=dict(state.frozen), disagreements={}, wall_ms=wall)
    for sub in subproblems:
        new_state.disagreements[sub.id] = disagreement(new_state, sub)
    return new_state


def assemble(subproblems: list[SubProblem], values: Mapping[int, np.ndarray],
             central_size: int) -> np.ndarray:
    """Gather local solutions into a central vector; co-owned variables are
    averaged across their copies."""
    acc = np.zeros(central_size)
    count = np.zeros(central_size)
    for sub in subproblems:
        np.add.at(acc, sub.map_to_global, values[sub.id])
        np.add.at(count, sub.map_to_global, 1.0)
    if (count == 0).any():
        raise PartitionError("assembled solution leaves variables unowned")
    return acc / count


def _restore(snapshot, subproblems: list[SubProblem],
             config: SolverConfig) -> IterationState:
    """Rebuild a live iteration state from a checkpoint snapshot."""
    want = {sub.id for sub in subproblems}
    have = set(snapshot.subproblems)
    if want != have:
        raise CheckpointError(
            f"checkpoint partition mismatch: file has sub-problems "
            f"{sorted(have)}, scenario has {sorted(want)}")
    state = IterationState(k=snapshot.k, values={}, workspaces={},
                           frozen={}, disagreements={}, wall_ms={})
    for sub in subproblems:
        rec = snapshot.subproblems[sub.id]
        ws = ProjectionWorkspace.for_system(
            sub.system, config.projection_tolerance,
            config.projection_max_sweeps)
        shapes_ok = (rec.values.shape == (sub.n_vars,)
                     and rec.row_dual.shape == ws.row_dual.shape
                     and rec.lower_dual.shape == ws.lower_dual.shape
                     and rec.upper_dual.shape == ws.upper_dual.shape)
        if not shapes_ok:
            raise CheckpointError(
                f"checkpoint arrays for sub-problem {sub.id} do not match "
                f"the scenario's dimensions")
        ws.row_dual[:] = rec.row_dual
        ws.lower_dual[:] = rec.lower_dual
        ws.upper_dual[:] = rec.upper_dual
        state.values[sub.id] = rec.values.copy()
        state.workspaces[sub.id] = ws
        state.frozen[sub.id] = rec.frozen
        state.disagreements[sub.id] = rec.disagreement
        state.wall_ms[sub.id] = rec.wall_ms
    return state


def run(network: Network, signals: SignalSchedule, demand: DemandProfile,
        assignment: Mapping[int, int], config: SolverConfig,
        initial: np.ndarray | None = None,
        on_iteration: Callable[[IterationState], None] | None = None,
        checkpoint_callback: Callable[[IterationState], None] | None = None,
        resume_state: IterationState | None = None) -> RunTrace:
    """Solve one scenario with the distributed consensus-gradient method.

    ``initial`` overrides the default warm start (a shortest-path CTM
    simulation flattened onto the decision variables). ``resume_state``
    continues a checkpointed run; its iteration counter determines where the
    schedule resumes.
    """
    system, objective = build_central_system(network, signals, demand)
    subproblems = partition(system, objective, assignment)
    graph = build_exchange_graph(subproblems, config.weight_rule,
                                 config.theta, config.theta_prime)

    if resume_state is not None:
        if isinstance(resume_state, IterationState):
            state = resume_state
        else:
            state = _restore(resume_state, subproblems, config)
        for sub in subproblems:
            if state.values[sub.id].shape != (sub.n_vars,):
                raise PartitionError(
                    f"resume state shaped for a different partition "
                    f"(sub-problem {sub.id})")
    else:
        if initial is None:
            trace0 = simulate(network, signals, demand,
                              shortest_paths(network))
            base = trace_to_vector(system.space, trace0.x, trace0.y)
        else:
            base = np.asarray(initial, dtype=np.float64)
            if base.shape != (system.space.size,):
                raise ValueError(
                    f"initial point must have {system.space.size} entries")
        state = IterationState(
            k=0,
            values={s.id: base[s.map_to_global].copy() for s in subproblems},
            workspaces={s.id: ProjectionWorkspace.for_system(
                s.system, config.projection_tolerance,
                config.projection_max_sweeps) for s in subproblems},
            frozen={s.id: False for s in subproblems},
            disagreements={s.id: 0.0 for s in subproblems},
            wall_ms={s.id: 0.0 for s in subproblems})

    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
    rows: list[TraceRow] = []
    termination = "max_iterations"
    try:
        while state.k < config.max_iterations:
            state = superstep(state, subproblems, graph, config.schedule,
                              pool)
            all_settled = True
            for sub in subproblems:
                settled = state.disagreements[sub.id] <= config.epsilon
                state.frozen[sub.id] = settled
                all_settled = all_settled and settled
                rows.append(TraceRow(
                    iteration=state.k, subproblem=sub.id,
                    objective_hr=float(
                        sub.objective @ state.values[sub.id]) / 3600.0,
                    disagreement=state.disagreements[sub.id],
                    wall_ms=state.wall_ms[sub.id]))
            if checkpoint_callback is not None and \
                    config.checkpoint_interval > 0 and \
                    state.k % config.checkpoint_interval == 0:
                checkpoint_callback(state)
            if on_iteration is not None:
                on_iteration(state)
            if all_settled:
                termination = "consensus"
                break
    finally:
        if pool is not None:
            pool.shutdown()

    averaged = assemble(subproblems, state.values, system.space.size)
    # Averaging disagreeing copies leaves an O(epsilon) constraint residual;
    # one projection onto the central system repairs it, so the reported
    # objective is attained by a genuinely feasible assignment.
    final = project(averaged, system, ProjectionWorkspace.for_system(
        system, config.projection_tolerance, config.projection_max_sweeps))
    return RunTrace(
        rows=rows,
        final_values=final,
        averaged_values=averaged,
        termination=termination,
        iterations=state.k,
        objective_hr=evaluate_objective(objective, final) / 3600.0,
        subproblem_objectives_hr={
            s.id: float(s.objective @ state.values[s.id]) / 3600.0
            for s in subproblems},
        disagreements=dict(state.disagreements))
