"""Word-level prosody/text redundancy estimation.

Pipeline: extract prosodic features per word token (energy, duration per
syllable, pause, f0 curve parameters, prominence), estimate the feature's
differential entropy by kernel density estimation, train embedding-
conditioned heads for the conditional cross-entropy, and report the mutual
information MI = H - H_cond per (feature, context type), validated against
independent baseline estimators.
"""

from .errors import (ConfigError, DataError, DegenerateDataError,
                     InsufficientClassDataError, JoinError, NumericError,
                     ParameterError, ParseError, PipelineError, RangeError,
                     SearchFailedError, SupportError, TrainingDivergedError,
                     ValidationError)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "DegenerateDataError",
    "InsufficientClassDataError", "JoinError", "NumericError",
    "ParameterError", "ParseError", "PipelineError", "RangeError",
    "SearchFailedError", "SupportError", "TrainingDivergedError",
    "ValidationError", "__version__",
]
