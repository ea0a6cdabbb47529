"""Scenario files: JSON documents describing one solvable instance.

A scenario bundles the network geometry, demand, signal timings, the region
partition, and the solver settings. Documents are schema-validated before
anything is built from them; unknown keys anywhere are rejected so typos
fail loudly instead of silently falling back to defaults.

Demand is stored as sparse ``[od, step, volume]`` triplets (vehicles enter
at the origin cell of the OD pair). Signals are a sparse list of
``[cell, step]`` pairs that are green; omitting the section entirely means
every intersection is green at every step, while an explicit list makes any
unlisted (cell, step) red.

``load_scenario`` accepts either a filesystem path or the name of a bundled
instance (``fig2``, ``chain3``, ``grid2x2``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from .dga import SolverConfig, StepSchedule
from .errors import ScenarioError
from .network import (CELL_KINDS, INTERSECTION, Cell, DemandProfile, Network,
                      SignalSchedule, build_network, validate_demand)

_PAIR = {
    "type": "array",
    "items": {"type": "integer"},
    "minItems": 2,
    "maxItems": 2,
}

_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "cells", "links", "delta", "tau", "horizon",
                 "od_pairs", "demand", "partition", "solver"],
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "cells": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["id", "kind", "M", "F"],
                "properties": {
                    "id": {"type": "integer"},
                    "kind": {"enum": list(CELL_KINDS)},
                    "M": {"type": "number"},
                    "F": {"type": "number"},
                },
            },
        },
        "links": {"type": "array", "items": _PAIR},
        "delta": {"type": "number"},
        "tau": {"type": "number"},
        "horizon": {"type": "integer", "minimum": 1},
        "od_pairs": {"type": "array", "minItems": 1, "items": _PAIR},
        "demand": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {"type": "number"},
                "minItems": 3,
                "maxItems": 3,
            },
        },
        "signals": {"type": "array", "items": _PAIR},
        "partition": {
            "type": "object",
            "patternProperties": {"^-?[0-9]+$": {"type": "integer"}},
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epsilon": {"type": "number", "exclusiveMinimum": 0},
                "max_iterations": {"type": "integer", "minimum": 0},
                "schedule": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["name"],
                    "properties": {
                        "name": {"enum": ["power"]},
                        "alpha_exponent": {"type": "number"},
                        "gamma_exponent": {"type": "number"},
                        "alpha_scale": {"type": "number",
                                        "exclusiveMinimum": 0},
                        "gamma_scale": {"type": "number",
                                        "exclusiveMinimum": 0},
                    },
                },
                "weights": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "items": {"type": "number"},
                        "minItems": 3,
                        "maxItems": 3,
                    },
                },
                "theta": {"type": "number", "exclusiveMinimum": 0},
                "theta_prime": {"type": "number", "exclusiveMinimum": 0},
                "projection_tolerance": {"type": "number",
                                         "exclusiveMinimum": 0},
                "projection_max_sweeps": {"type": "integer", "minimum": 1},
                "checkpoint_interval": {"type": "integer", "minimum": 0},
                "threads": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
            },
        },
    },
}

_SOLVER_DEFAULTS = {
    "epsilon": 0.5,
    "max_iterations": 5000,
    "alpha_exponent": 0.55,
    "gamma_exponent": 1.0,
    "alpha_scale": 1.0,
    "gamma_scale": 1.0,
    "projection_tolerance": 1e-6,
    "projection_max_sweeps": 10_000,
    "checkpoint_interval": 0,
    "threads": 1,
    "seed": 0,
}


@dataclass(frozen=True)
class SolverSettings:
    """Plain solver parameters as they appear in the file.

    Kept separate from :class:`~sodta.dga.SolverConfig` (which holds live
    schedule callables) so scenarios stay comparable and serializable.
    """

    epsilon: float = _SOLVER_DEFAULTS["epsilon"]
    max_iterations: int = _SOLVER_DEFAULTS["max_iterations"]
    alpha_exponent: float = _SOLVER_DEFAULTS["alpha_exponent"]
    gamma_exponent: float = _SOLVER_DEFAULTS["gamma_exponent"]
    alpha_scale: float = _SOLVER_DEFAULTS["alpha_scale"]
    gamma_scale: float = _SOLVER_DEFAULTS["gamma_scale"]
    weights: tuple[tuple[int, int, float], ...] | None = None
    theta: float | None = None
    theta_prime: float | None = None
    projection_tolerance: float = _SOLVER_DEFAULTS["projection_tolerance"]
    projection_max_sweeps: int = _SOLVER_DEFAULTS["projection_max_sweeps"]
    checkpoint_interval: int = _SOLVER_DEFAULTS["checkpoint_interval"]
    threads: int = _SOLVER_DEFAULTS["threads"]
    seed: int = _SOLVER_DEFAULTS["seed"]

    def to_config(self) -> SolverConfig:
        rule = None
        if self.weights is not None:
            rule = {(s, s2): w for s, s2, w in self.weights}
        return SolverConfig(
            epsilon=self.epsilon,
            max_iterations=self.max_iterations,
            schedule=StepSchedule.power(
                self.alpha_exponent, self.gamma_exponent,
                self.alpha_scale, self.gamma_scale),
            weight_rule=rule,
            theta=self.theta,
            theta_prime=self.theta_prime,
            projection_tolerance=self.projection_tolerance,
            projection_max_sweeps=self.projection_max_sweeps,
            checkpoint_interval=self.checkpoint_interval,
            threads=self.threads,
            seed=self.seed)


@dataclass(frozen=True)
class Scenario:
    name: str
    network: Network
    signals: SignalSchedule
    demand: DemandProfile
    assignment: dict[int, int]
    solver: SolverSettings


def parse_scenario(doc: dict) -> Scenario:
    """Validate a decoded JSON document and build the scenario objects.

    Raises :class:`ScenarioError` on schema violations and on semantic
    problems the schema cannot express (bad demand indices, partition not
    covering the cells, signals on non-intersection cells). Topology errors
    surface as :class:`~sodta.errors.NetworkError`.
    """
    validator = jsonschema.Draft7Validator(_SCHEMA)
    problems = [
        f"{'/'.join(str(p) for p in err.absolute_path) or '<root>'}: "
        f"{err.message}"
        for err in sorted(validator.iter_errors(doc),
                          key=lambda e: list(map(str, e.absolute_path)))
    ]
    if problems:
        raise ScenarioError("invalid scenario:\n  " + "\n  ".join(problems))

    network = build_network(
        cells=[Cell(c["id"], c["kind"], float(c["M"]), float(c["F"]))
               for c in doc["cells"]],
        links=[(t, h) for t, h in doc["links"]],
        delta=float(doc["delta"]),
        tau=float(doc["tau"]),
        horizon=int(doc["horizon"]),
        od_pairs=[(o, d) for o, d in doc["od_pairs"]])

    entries: dict[tuple[int, int, int], float] = {}
    for od, step, volume in doc["demand"]:
        if od != int(od) or step != int(step):
            raise ScenarioError(
                f"demand triplet [{od}, {step}, {volume}]: od and step "
                f"must be integers")
        od, step = int(od), int(step)
        if not 0 <= od < network.n_od:
            raise ScenarioError(f"demand references unknown OD index {od}")
        key = (network.od_pairs[od][0], step, od)
        if key in entries:
            raise ScenarioError(
                f"duplicate demand entry for OD {od} at step {step}")
        entries[key] = float(volume)
    demand = DemandProfile(entries)
    demand_problems = validate_demand(network, demand)
    if demand_problems:
        raise ScenarioError(
            "invalid demand:\n  " + "\n  ".join(demand_problems))

    signals = SignalSchedule(None)
    if "signals" in doc:
        green = set()
        for cell_id, step in doc["signals"]:
            if cell_id not in network.cell_ids():
                raise ScenarioError(f"signal on unknown cell {cell_id}")
            if not network.is_intersection(cell_id):
                raise ScenarioError(
                    f"signal on cell {cell_id}, which is not an intersection")
            if not 0 <= step < network.horizon:
                raise ScenarioError(
                    f"signal step {step} outside horizon "
                    f"[0, {network.horizon})")
            green.add((cell_id, step))
        signals = SignalSchedule(frozenset(green))

    assignment: dict[int, int] = {}
    for key, region in doc["partition"].items():
        cell_id = int(key)
        if cell_id not in network.cell_ids():
            raise ScenarioError(f"partition references unknown cell {cell_id}")
        assignment[cell_id] = region
    missing = sorted(network.cell_ids() - assignment.keys())
    if missing:
        raise ScenarioError(f"partition misses cells {missing}")

    return Scenario(
        name=doc["name"],
        network=network,
        signals=signals,
        demand=demand,
        assignment=assignment,
        solver=_parse_solver(doc["solver"]))


def _parse_solver(block: dict) -> SolverSettings:
    sched = block.get("schedule", {"name": "power"})
    weights = None
    if "weights" in block:
        weights = []
        for s, s2, w in block["weights"]:
            if s != int(s) or s2 != int(s2):
                raise ScenarioError(
                    f"weight entry [{s}, {s2}, {w}]: sub-problem ids must "
                    f"be integers")
            weights.append((int(s), int(s2), float(w)))
        weights = tuple(weights)
    settings = SolverSettings(
        epsilon=float(block.get("epsilon", _SOLVER_DEFAULTS["epsilon"])),
        max_iterations=int(block.get(
            "max_iterations", _SOLVER_DEFAULTS["max_iterations"])),
        alpha_exponent=float(sched.get(
            "alpha_exponent", _SOLVER_DEFAULTS["alpha_exponent"])),
        gamma_exponent=float(sched.get(
            "gamma_exponent", _SOLVER_DEFAULTS["gamma_exponent"])),
        alpha_scale=float(sched.get(
            "alpha_scale", _SOLVER_DEFAULTS["alpha_scale"])),
        gamma_scale=float(sched.get(
            "gamma_scale", _SOLVER_DEFAULTS["gamma_scale"])),
        weights=weights,
        theta=float(block["theta"]) if "theta" in block else None,
        theta_prime=(float(block["theta_prime"])
                     if "theta_prime" in block else None),
        projection_tolerance=float(block.get(
            "projection_tolerance", _SOLVER_DEFAULTS["projection_tolerance"])),
        projection_max_sweeps=int(block.get(
            "projection_max_sweeps",
            _SOLVER_DEFAULTS["projection_max_sweeps"])),
        checkpoint_interval=int(block.get(
            "checkpoint_interval", _SOLVER_DEFAULTS["checkpoint_interval"])),
        threads=int(block.get("threads", _SOLVER_DEFAULTS["threads"])),
        seed=int(block.get("seed", _SOLVER_DEFAULTS["seed"])))
    try:
        settings.to_config()
    except ValueError as exc:
        raise ScenarioError(f"invalid solver settings: {exc}") from exc
    return settings


def scenario_to_dict(scenario: Scenario) -> dict:
    """Canonical document form: sorted entries, every solver key explicit.

    ``parse_scenario(scenario_to_dict(s))`` reproduces ``s``, and a second
    round-trip reproduces the document byte for byte.
    """
    net = scenario.network
    demand = []
    for (cell, step, od), volume in scenario.demand.entries.items():
        if net.od_pairs[od][0] != cell:
            raise ScenarioError(
                f"demand at cell {cell} is not at the origin of OD {od}")
        demand.append([od, step, volume])
    s = scenario.solver
    doc = {
        "name": scenario.name,
        "cells": [{"id": c.id, "kind": c.kind, "M": c.max_occupancy,
                   "F": c.sat_flow} for c in net.cells],
        "links": [list(link) for link in net.links],
        "delta": net.delta,
        "tau": net.tau,
        "horizon": net.horizon,
        "od_pairs": [list(od) for od in net.od_pairs],
        "demand": sorted(demand),
        "partition": {str(cid): scenario.assignment[cid]
                      for cid in sorted(scenario.assignment)},
        "solver": {
            "epsilon": s.epsilon,
            "max_iterations": s.max_iterations,
            "schedule": {
                "name": "power",
                "alpha_exponent": s.alpha_exponent,
                "gamma_exponent": s.gamma_exponent,
                "alpha_scale": s.alpha_scale,
                "gamma_scale": s.gamma_scale,
            },
            "projection_tolerance": s.projection_tolerance,
            "projection_max_sweeps": s.projection_max_sweeps,
            "checkpoint_interval": s.checkpoint_interval,
            "threads": s.threads,
            "seed": s.seed,
        },
    }
    if scenario.signals.green is not None:
        doc["signals"] = sorted([c, t] for c, t in scenario.signals.green)
    if s.weights is not None:
        doc["solver"]["weights"] = [list(w) for w in s.weights]
    if s.theta is not None:
        doc["solver"]["theta"] = s.theta
    if s.theta_prime is not None:
        doc["solver"]["theta_prime"] = s.theta_prime
    return doc


def bundled_scenarios() -> list[str]:
    """Names of the scenarios shipped inside the package."""
    data = resources.files("sodta").joinpath("data")
    return sorted(p.name[:-5] for p in data.iterdir()
                  if p.name.endswith(".json"))


def load_scenario(source: str | Path) -> Scenario:
    """Load a scenario from a path, or by bundled name if no file exists."""
    path = Path(source)
    if path.exists():
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"cannot read scenario {path}: {exc}") \
                from exc
    else:
        name = path.name[:-5] if path.name.endswith(".json") else path.name
        candidate = resources.files("sodta").joinpath("data", f"{name}.json")
        if path.name == str(path) and candidate.is_file():
            doc = json.loads(candidate.read_text(encoding="utf-8"))
        else:
            raise ScenarioError(
                f"no scenario file {source!r} and no bundled scenario of "
                f"that name (bundled: {', '.join(bundled_scenarios())})")
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a JSON object")
    return parse_scenario(doc)


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(scenario_to_dict(scenario), indent=2, sort_keys=True)
        + "\n", encoding="utf-8")
