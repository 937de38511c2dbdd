"""Exception types shared across the toolkit."""


class BoxFusionError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(BoxFusionError, ValueError):
    """An argument violates a documented contract (range, shape, method name)."""


class DataError(BoxFusionError):
    """Input files or records are malformed or mutually inconsistent."""
