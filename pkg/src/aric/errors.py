"""Exception hierarchy shared by the codec, trainer and CLI."""


class AricError(Exception):
    """Base class for all package errors."""


class ArgumentError(AricError, ValueError):
    """Bad argument values (shapes, ranges, malformed options)."""


class BitstreamError(AricError):
    """Corrupt, truncated or otherwise undecodable bitstream."""


class ModelFormatError(AricError):
    """Model file does not parse or does not match the fixed topology."""


class ConfigurationError(AricError):
    """Run configuration is inconsistent (missing models, tag mismatch)."""


class TrainingDivergedError(AricError):
    """Training produced a non-finite loss or parameter."""


class EvaluationError(AricError):
    """Evaluation inputs are insufficient or degenerate."""
