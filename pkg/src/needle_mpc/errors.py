"""Exception types shared across the package."""


class NeedleMpcError(Exception):
    """Base class for all package errors."""


class InvalidInputError(NeedleMpcError, ValueError):
    """A runtime argument is malformed (wrong shape, non-finite, out of range)."""


class InvalidConfigError(NeedleMpcError, ValueError):
    """A configuration value is inconsistent or out of its allowed range."""


class DegenerateFitError(NeedleMpcError, ValueError):
    """A fit has no unique solution (e.g. all-zero tensions in a gain fit)."""


class NumericalFailureError(NeedleMpcError, RuntimeError):
    """A numerical routine produced non-finite values and cannot continue."""


class SchemaError(NeedleMpcError, ValueError):
    """A scenario or manifest document does not match the expected schema."""


class OutOfRangeError(NeedleMpcError, ValueError):
    """A query time lies outside the span covered by recorded data."""
