"""Shared exception types, mapped to CLI exit codes by graphrobust.cli."""


class GraphRobustError(Exception):
    """Base class for all package errors."""


class DataError(GraphRobustError):
    """Malformed, inconsistent, or missing input data (CLI exit code 2)."""


class ConfigError(GraphRobustError):
    """Invalid configuration or infeasible hyperparameters (CLI exit code 2)."""


class CapacityError(GraphRobustError):
    """Requested computation exceeds a documented size guard (CLI exit code 2)."""


class NumericError(GraphRobustError):
    """Numerical failure: divergence, non-convergence, NaN (CLI exit code 3)."""
