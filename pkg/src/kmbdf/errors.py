"""Exception types shared across the package."""


class KmbdfError(Exception):
    """Base class for all package errors."""


class ShapeError(KmbdfError, ValueError):
    """Inputs have inconsistent or invalid dimensions."""


class DomainError(KmbdfError, ValueError):
    """Inputs contain values outside the allowed domain (NaN, Inf, ...)."""


class ConfigError(KmbdfError, ValueError):
    """A configuration value violates its invariants."""


class DataError(KmbdfError, ValueError):
    """A data file could not be parsed or is malformed."""
