"""Exception types shared across the package."""

from __future__ import annotations


class SodtaError(Exception):
    """Base class for all package-specific errors."""


class NetworkError(SodtaError):
    """Invalid network topology, demand, or signal data."""


class ScenarioError(SodtaError):
    """Malformed or inconsistent scenario file."""


class PartitionError(SodtaError):
    """Invalid region assignment or exchange-graph configuration."""


class ProjectionError(SodtaError):
    """Projection failed to reach the requested KKT tolerance."""

    def __init__(self, message: str, residual: float | None = None,
                 sweeps: int | None = None):
        super().__init__(message)
        self.residual = residual
        self.sweeps = sweeps


class InfeasibleProblemError(SodtaError):
    """Linear program has no feasible point; carries a Farkas certificate."""

    def __init__(self, message: str, farkas=None):
        super().__init__(message)
        self.farkas = farkas


class SimplexError(SodtaError):
    """Simplex iteration cap exceeded or unbounded problem."""


class CheckpointError(SodtaError):
    """Unreadable, truncated, or version-mismatched checkpoint file."""
