"""Shared exception types."""


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ContractError(ValueError):
    """A caller violated an operation's precondition."""


class InputTooLongError(ValueError):
    """Sequence exceeds the model's configured maximum length."""


class FormatError(ValueError):
    """An input file is not in the expected format."""


class ConfigError(ValueError):
    """A run configuration is missing, malformed, or contains unknown keys."""


class DataError(ValueError):
    """A record is unusable for the requested task."""


class MetricError(ValueError):
    """A metric cannot be computed from the given trials."""
