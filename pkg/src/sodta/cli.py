"""Command-line driver.

Subcommands: ``validate`` (parse and check a scenario), ``simulate`` (run
the warm-start traffic simulation only), ``oracle`` (solve the central
program exactly), and ``solve`` (run the distributed solver, optionally
comparing against the oracle, re-simulating, plotting, and checkpointing).

Exit codes: 0 success, 2 malformed scenario or checkpoint, 3 solver failure
(projection stall, non-convergence within the iteration budget, or a
numerical failure in the oracle), 4 infeasible program.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

from . import __version__, _kernels
from .checkpoint import read_checkpoint, write_checkpoint
from .ctm import shortest_paths, simulate, total_travel_time
from .dga import RunTrace, run
from .errors import (CheckpointError, InfeasibleProblemError, NetworkError,
                     ProjectionError, ScenarioError, SimplexError)
from .formulation import (build_central_system, check_feasibility,
                          trace_to_vector)
from .oracle import optimality_gap, solve_central
from .scenario import Scenario, load_scenario

_EXIT_OK = 0
_EXIT_BAD_SCENARIO = 2
_EXIT_SOLVER_FAILURE = 3
_EXIT_INFEASIBLE = 4


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (ScenarioError, NetworkError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_BAD_SCENARIO
    except (ProjectionError, SimplexError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return _EXIT_SOLVER_FAILURE
    except InfeasibleProblemError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return _EXIT_INFEASIBLE


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sodta",
        description="Distributed solver for system-optimal dynamic traffic "
                    "assignment on cell-transmission networks.")
    parser.add_argument("--version", action="version",
                        version=f"sodta {__version__} "
                                f"({_kernels.backend_name()} kernel)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("scenario")
    p.set_defaults(handler=_cmd_validate)

    p = sub.add_parser("simulate",
                       help="run the shortest-path traffic simulation only")
    p.add_argument("scenario")
    p.add_argument("--out", metavar="DIR", default=None)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("oracle", help="solve the central program exactly")
    p.add_argument("scenario")
    p.add_argument("--out", metavar="DIR", default=None)
    p.set_defaults(handler=_cmd_oracle)

    p = sub.add_parser("solve", help="run the distributed solver")
    p.add_argument("scenario")
    p.add_argument("--oracle", action="store_true",
                   help="also solve centrally and report the optimality gap")
    p.add_argument("--post-simulate", action="store_true",
                   help="re-run the traffic simulation as an operational "
                        "reference")
    p.add_argument("--out", metavar="DIR", default=".")
    p.add_argument("--plot", action="store_true",
                   help="write objective/disagreement SVG plots")
    p.add_argument("--checkpoint-every", type=int, metavar="N", default=None)
    p.add_argument("--resume", metavar="FILE", default=None)
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(handler=_cmd_solve)
    return parser


def _cmd_validate(args) -> int:
    scenario = load_scenario(args.scenario)
    net = scenario.network
    print(f"{scenario.name}: {net.n_cells} cells, {net.n_links} links, "
          f"{net.n_od} OD pairs, horizon {net.horizon}, "
          f"{len(set(scenario.assignment.values()))} regions: ok")
    return _EXIT_OK


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    trace = simulate(scenario.network, scenario.signals, scenario.demand,
                     shortest_paths(scenario.network))
    hours = total_travel_time(trace, scenario.network)
    print(f"{scenario.name}: simulated travel time {hours!r} h")
    if args.out is not None:
        out = _ensure_dir(args.out)
        system, _ = build_central_system(
            scenario.network, scenario.signals, scenario.demand)
        values = trace_to_vector(system.space, trace.x, trace.y)
        path = out / f"{scenario.name}_sim.csv"
        _write_solution(system.space, values, path)
        print(f"wrote {path}")
    return _EXIT_OK


def _cmd_oracle(args) -> int:
    scenario = load_scenario(args.scenario)
    system, objective = build_central_system(
        scenario.network, scenario.signals, scenario.demand)
    begin = time.perf_counter()
    solution = solve_central(system, objective)
    elapsed = time.perf_counter() - begin
    hours = solution.value / 3600.0
    print(f"{scenario.name}: optimum {hours!r} h "
          f"({solution.pivots} pivots, {elapsed:.2f} s)")
    if args.out is not None:
        out = _ensure_dir(args.out)
        path = out / f"{scenario.name}_oracle.csv"
        _write_solution(system.space, solution.x, path)
        print(f"wrote {path}")
    return _EXIT_OK


def _cmd_solve(args) -> int:
    scenario = load_scenario(args.scenario)
    config = scenario.solver.to_config()
    if args.threads is not None:
        config.threads = args.threads
    if args.checkpoint_every is not None:
        config.checkpoint_interval = args.checkpoint_every
    out = _ensure_dir(args.out)

    resume = None
    if args.resume is not None:
        resume = read_checkpoint(args.resume)

    callback = None
    if config.checkpoint_interval > 0:
        ckpt_path = out / f"{scenario.name}.ckpt"
        callback = lambda state: write_checkpoint(state, ckpt_path)

    begin = time.perf_counter()
    trace = run(scenario.network, scenario.signals, scenario.demand,
                scenario.assignment, config,
                checkpoint_callback=callback, resume_state=resume)
    runtime = time.perf_counter() - begin

    trace_path = out / f"{scenario.name}_trace.csv"
    _write_trace(trace, trace_path)
    system, objective = build_central_system(
        scenario.network, scenario.signals, scenario.demand)
    _write_solution(system.space, trace.final_values,
                    out / f"{scenario.name}_solution.csv")

    oracle_hours = None
    oracle_row = None
    if args.oracle:
        oracle_begin = time.perf_counter()
        solution = solve_central(system, objective)
        oracle_runtime = time.perf_counter() - oracle_begin
        oracle_hours = solution.value / 3600.0
        oracle_row = [scenario.demand.total(), "oracle", oracle_hours,
                      0.0, oracle_runtime, solution.pivots]

    gap = None
    if oracle_hours is not None:
        gap = optimality_gap(trace.objective_hr, oracle_hours)

    rows = [[scenario.demand.total(), "dga", trace.objective_hr,
             gap, runtime, trace.iterations]]
    if oracle_row is not None:
        rows.append(oracle_row)
    if args.post_simulate:
        sim_begin = time.perf_counter()
        sim = simulate(scenario.network, scenario.signals, scenario.demand,
                       shortest_paths(scenario.network))
        sim_runtime = time.perf_counter() - sim_begin
        sim_hours = total_travel_time(sim, scenario.network)
        sim_gap = optimality_gap(sim_hours, oracle_hours) \
            if oracle_hours is not None else None
        rows.append([scenario.demand.total(), "simulation", sim_hours,
                     sim_gap, sim_runtime, scenario.network.horizon])
    _write_summary(rows, out / f"{scenario.name}_summary.csv")

    if args.plot:
        _write_plots(scenario, trace, oracle_hours, out)

    feasibility = check_feasibility(system, trace.final_values,
                                    tol=1e-6)
    gap_note = f", gap {gap!r}%" if gap is not None else ""
    print(f"{scenario.name}: {trace.termination} after {trace.iterations} "
          f"iterations, objective {trace.objective_hr!r} h{gap_note}, "
          f"max constraint violation {feasibility.max_violation:.2e}")
    if trace.termination != "consensus":
        print("warning: iteration budget exhausted before all sub-problems "
              "agreed; results are best-so-far", file=sys.stderr)
        return _EXIT_SOLVER_FAILURE
    return _EXIT_OK


def _ensure_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_trace(trace: RunTrace, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "subproblem", "objective", "disagreement",
                         "wall_ms"])
        for row in trace.rows:
            writer.writerow([row.iteration, row.subproblem,
                             repr(row.objective_hr), repr(row.disagreement),
                             repr(row.wall_ms)])


def _write_solution(space, values, path: Path) -> None:
    """Sparse nonzero entries of a central solution vector."""
    net = space.network
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["var", "cell", "tail", "head", "t", "od", "value"])
        for cell_id in space.cell_ids:
            for t in range(net.horizon):
                for od in range(net.n_od):
                    v = values[space.x_index(cell_id, t, od)]
                    if v != 0.0:
                        writer.writerow(["x", cell_id, "", "", t, od,
                                         repr(float(v))])
        for link in space.link_indices:
            tail, head = net.links[link]
            for t in range(net.horizon):
                for od in range(net.n_od):
                    v = values[space.y_index(link, t, od)]
                    if v != 0.0:
                        writer.writerow(["y", "", tail, head, t, od,
                                         repr(float(v))])


def _write_summary(rows, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["demand", "approach", "objective_hr", "gap_pct",
                         "runtime_s", "iterations"])
        for demand, approach, obj, gap, runtime, iters in rows:
            writer.writerow([
                repr(float(demand)), approach, repr(float(obj)),
                "" if gap is None else repr(float(gap)),
                repr(float(runtime)), iters])


def _write_plots(scenario: Scenario, trace: RunTrace,
                 oracle_hours: float | None, out: Path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    iters = sorted({row.iteration for row in trace.rows})
    totals = {k: 0.0 for k in iters}
    per_sub: dict[int, tuple[list[int], list[float]]] = {}
    for row in trace.rows:
        totals[row.iteration] += row.objective_hr
        ks, ds = per_sub.setdefault(row.subproblem, ([], []))
        ks.append(row.iteration)
        ds.append(row.disagreement)

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(iters, [totals[k] for k in iters], label="distributed solver")
    if oracle_hours is not None:
        ax.axhline(oracle_hours, linestyle="--", color="black",
                   label="central optimum")
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective [veh h]")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / f"{scenario.name}_objective.svg")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7, 4))
    for sid in sorted(per_sub):
        ks, ds = per_sub[sid]
        ax.plot(ks, ds, label=f"sub-problem {sid}")
    ax.axhline(scenario.solver.epsilon, linestyle="--", color="black",
               label="epsilon")
    ax.set_xlabel("iteration")
    ax.set_ylabel("disagreement")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / f"{scenario.name}_disagreement.svg")
    plt.close(fig)


if __name__ == "__main__":
    sys.exit(main())
