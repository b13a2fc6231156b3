"""Exception hierarchy.

Every error carries a short ``category`` string. The command-line front end
prints it as the first token of its one-line failure message so scripts can
dispatch on it.
"""


class BridgeVarError(Exception):
    category = "error"


class ConfigurationError(BridgeVarError, ValueError):
    """Invalid parameters or an inconsistent run configuration."""

    category = "config"


class DomainError(BridgeVarError, ValueError):
    """Argument outside the mathematical domain of a function."""

    category = "domain"


class DataError(BridgeVarError, ValueError):
    """Malformed or unusable input data (ticks, records)."""

    category = "data"


class MissingFieldError(DataError):
    """A record lacks a field that the requested estimator consumes."""

    category = "missing-field"


class NumericalFailure(BridgeVarError, ArithmeticError):
    """A series or quadrature failed to produce a trustworthy value."""

    category = "numerical"

    def __init__(self, message, point=None, achieved=None):
        super().__init__(message)
        self.point = point
        self.achieved = achieved


class TableError(BridgeVarError):
    """Alpha table missing, unreadable or corrupted."""

    category = "table"

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset
