"""Distributed gradient solver for system-optimal dynamic traffic assignment.

The package models a road network as cell-transmission-model cells, builds
the time-expanded linear program whose optimum is the system-optimal
assignment, splits it into intersection-level sub-problems, and solves it by
iterating consensus averaging, a gradient step, and a Euclidean projection on
each sub-problem until the boundary-flow copies agree.

The projection inner loop has two interchangeable backends: a compiled
Cython kernel and a pure-Python fallback that produce bit-identical results.
``sodta._kernels.backend_name()`` reports which one is active; set the
``SODTA_KERNEL`` environment variable to ``python`` or ``compiled`` to force
a choice before import.
"""

from ._kernels import available_backends, backend_name, set_backend
from .ctm import SimTrace, shortest_paths, simulate, total_travel_time
from .dga import RunTrace, SolverConfig, StepSchedule, run
from .errors import (CheckpointError, InfeasibleProblemError, NetworkError,
                     PartitionError, ProjectionError, ScenarioError,
                     SimplexError, SodtaError)
from .formulation import build_central_system, check_feasibility
from .network import (DemandProfile, Network, SignalSchedule, build_network,
                      validate_demand)
from .oracle import LPSolution, optimality_gap, solve_central
from .partition import build_exchange_graph, partition
from .projection import project
from .scenario import Scenario, load_scenario, save_scenario

__version__ = "0.1.0"

__all__ = [
    "CheckpointError",
    "DemandProfile",
    "InfeasibleProblemError",
    "LPSolution",
    "Network",
    "NetworkError",
    "PartitionError",
    "ProjectionError",
    "RunTrace",
    "Scenario",
    "ScenarioError",
    "SignalSchedule",
    "SimTrace",
    "SimplexError",
    "SodtaError",
    "SolverConfig",
    "StepSchedule",
    "available_backends",
    "backend_name",
    "build_central_system",
    "build_exchange_graph",
    "build_network",
    "check_feasibility",
    "load_scenario",
    "optimality_gap",
    "partition",
    "project",
    "run",
    "save_scenario",
    "set_backend",
    "shortest_paths",
    "simulate",
    "solve_central",
    "total_travel_time",
    "validate_demand",
    "__version__",
]
