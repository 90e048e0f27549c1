"""Exception types shared across the package."""


class StructFLError(Exception):
    """Base class for all errors raised by structfl."""


class DimensionError(StructFLError, ValueError):
    """Array shapes or vector lengths do not agree."""


class DomainError(StructFLError, ValueError):
    """An argument lies outside the domain of an operation."""


class ConfigError(StructFLError, ValueError):
    """Invalid experiment configuration.

    ``field`` names the offending configuration key when one applies.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field
