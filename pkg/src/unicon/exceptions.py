"""Error types shared across the library."""


class UniconError(Exception):
    """Base class for all library errors."""


class ShapeError(UniconError):
    """Operand dimensions do not agree."""


class BatchTooSmallError(UniconError):
    """An operation that needs batch statistics or in-batch negatives got B < 2."""


class ConfigError(UniconError):
    """Invalid configuration value."""


class DataError(UniconError):
    """Malformed or inconsistent dataset input."""


class ProtocolOrderError(UniconError):
    """A protocol message arrived out of the expected order."""


class DegenerateInputError(UniconError):
    """Statistic undefined for the given input (e.g. zero-variance differences)."""
