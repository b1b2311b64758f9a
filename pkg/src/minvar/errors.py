"""Exception hierarchy and CLI exit codes."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class MinvarError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(MinvarError):
    """Invalid or infeasible configuration (bad flags, impossible ranges)."""

    exit_code = EXIT_CONFIG


class DataError(MinvarError):
    """Input data violates a documented contract (bad prices, bad dates)."""

    exit_code = EXIT_DATA


class ParseError(DataError):
    """Malformed input file (structure, not values)."""


class NumericError(MinvarError):
    """A numerical routine failed (divergence, singularity, non-finite)."""

    exit_code = EXIT_NUMERIC


class ConvergenceError(NumericError):
    """An iterative method hit its iteration budget.

    Carries the last iterate and the residual at the point of failure so
    callers can inspect how close the run got.
    """

    def __init__(self, message, last_iterate=None, residual=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class SingularMatrixError(NumericError):
    """Matrix inversion requested for a singular or indefinite matrix."""


class CollapsedWeightsError(NumericError):
    """Portfolio weights cannot be normalized: 1'P1 is (numerically) zero.

    For the learned estimator this identifies a collapsed shrinkage output
    (all coefficients driven to zero by the output ReLU).
    """

    def __init__(self, message, eta=None):
        super().__init__(message)
        self.eta = eta


class ModelIOError(DataError):
    """Model file is corrupt (checksum), truncated, or unreadable."""


class SchemaVersionError(ModelIOError):
    """Model file was written with an unsupported schema version."""
