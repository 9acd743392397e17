"""Exception types shared across the package."""

__all__ = [
    "InvscatError",
    "ConfigError",
    "DimensionMismatch",
    "NoConvergence",
    "SeriesDivergence",
    "BadMagic",
    "TruncatedFile",
    "ShapeMismatch",
    "MissingWeights",
]


class InvscatError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(InvscatError, ValueError):
    """Invalid or inconsistent configuration values."""


class DimensionMismatch(InvscatError, ValueError):
    """Array or grid dimensions incompatible with the requested operation."""


class NoConvergence(InvscatError, RuntimeError):
    """An iterative linear solve exhausted its iteration budget."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SeriesDivergence(InvscatError, RuntimeError):
    """A special-function series failed to reach its truncation criterion."""


class BadMagic(InvscatError, ValueError):
    """A binary file does not start with the expected magic bytes."""


class TruncatedFile(InvscatError, ValueError):
    """A binary file ended before the declared payload was complete."""


class ShapeMismatch(InvscatError, ValueError):
    """A stored tensor's declared shape disagrees with the expected one."""

    def __init__(self, message, name=None):
        super().__init__(message)
        self.name = name


class MissingWeights(InvscatError, FileNotFoundError):
    """A projector weight file is required but was not supplied or found."""
