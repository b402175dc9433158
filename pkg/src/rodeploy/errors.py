"""Exception hierarchy and process exit codes."""


class RodeployError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(RodeployError):
    """Bad or inconsistent configuration / input document."""

    exit_code = 2


class MalformedPatternError(ConfigError):
    """Pattern input file cannot be interpreted as a valid planar curve."""


class InsufficientDataError(ConfigError):
    """Not enough samples to evaluate the requested operation."""


class InvalidFrameError(ConfigError):
    """A rotation / frame argument is not orthonormal."""


class SolverError(RodeployError):
    """Numerical solver family."""

    exit_code = 3


class SolverFailureError(SolverError):
    """Newton / fallback iteration did not converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateGeometryError(SolverError):
    """Zero-length edge, folded-back edge pair, or ambiguous transport."""


class JacobianError(SolverError):
    """Finite-difference Jacobian could not be evaluated."""


class LineSearchError(SolverError):
    """Backtracking line search exhausted without decrease."""


class StalledError(SolverError):
    """Outer Newton iteration stalled (step size underflow)."""


class TrainingError(RodeployError):
    """Neural-controller training family."""

    exit_code = 4


class ModelFileError(TrainingError):
    """Weights-file container problems (base)."""


class ModelVersionError(ModelFileError):
    """Unsupported weights-file format version."""


class ModelChecksumError(ModelFileError):
    """Weights-file payload checksum mismatch (truncation / corruption)."""


class ModelShapeError(ModelFileError):
    """Layer dimensions recorded in the file are inconsistent."""


class InvalidStatsError(TrainingError):
    """Standardization statistics are unusable (zero spread)."""


class ExtrapolationError(RodeployError):
    """Requested controller input lies outside the training hull (strict mode)."""

    exit_code = 5
