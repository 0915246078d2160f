"""
Error types shared by the library and the CLI.
CLI-facing errors carry the process exit code they map to.
"""


class DomainError(ValueError):
    """An input lies outside the domain of a model operation."""


class SimulationError(Exception):
    """Base class for errors surfaced by the CLI with a dedicated exit code."""
    exit_code = 1


class OutputNotWritableError(SimulationError):
    exit_code = 2


class InvariantViolation(SimulationError):
    """An accounting or probability invariant failed during a run."""
    exit_code = 3


class ConfigNotFoundError(SimulationError):
    exit_code = 4


class UnknownConfigKeyError(SimulationError):
    exit_code = 5


class ConfigConstraintError(SimulationError):
    exit_code = 6
