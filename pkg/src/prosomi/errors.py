"""Exception hierarchy shared across the pipeline.

Exit codes used by the CLI: 2 for configuration problems, 3 for data
problems, 4 for numeric/training failures.
"""


class PipelineError(Exception):
    exit_code = 1


class ConfigError(PipelineError):
    """Bad configuration: missing paths, out-of-range settings."""

    exit_code = 2


class ParameterError(ConfigError):
    """Out-of-range or inconsistent arguments to an operation."""


class DataError(PipelineError):
    """Input data violates a contract."""

    exit_code = 3


class ParseError(DataError):
    """Malformed input file; message names the file and line/field."""


class ValidationError(DataError):
    """Structurally valid input that breaks an invariant."""


class JoinError(DataError):
    """Token ids missing from one side of a dataset join."""


class RangeError(DataError):
    """A requested time span falls outside the available signal."""


class DegenerateDataError(DataError):
    """Data without enough variation to estimate from (zero variance,
    identical points, singular covariance)."""


class SupportError(DataError):
    """Target value outside the support of the predictive family."""


class InsufficientClassDataError(DataError):
    """A retained label class has too few points for per-class density
    estimation."""


class NumericError(PipelineError):
    exit_code = 4


class TrainingDivergedError(NumericError):
    """Validation loss became non-finite during training."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class SearchFailedError(NumericError):
    """Every random-search trial diverged."""

    def __init__(self, message, trial_log=None):
        super().__init__(message)
        self.trial_log = trial_log


class QuadratureError(NumericError):
    """Adaptive quadrature failed to reach its tolerance."""
