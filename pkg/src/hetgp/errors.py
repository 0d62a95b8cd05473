"""Exception types shared across the package."""


class HetGPError(Exception):
    """Base class for all errors raised by this package."""

    kind = "error"


class ConfigurationError(HetGPError, ValueError):
    """Invalid kernel, model or run configuration."""

    kind = "configuration"


class DataError(HetGPError, ValueError):
    """Input data violates a precondition (schema, masks, lengths)."""

    kind = "data"


class NumericalError(HetGPError, ArithmeticError):
    """A factorization or objective evaluation broke down."""

    kind = "numerical"
