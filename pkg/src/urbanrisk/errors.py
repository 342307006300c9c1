"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: configuration problems exit 2,
data/schema problems exit 3, numerical failures exit 4.
"""


class UrbanRiskError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(UrbanRiskError):
    """Invalid run configuration, selection, or CLI arguments."""


class SchemaError(UrbanRiskError):
    """Input data violates its declared schema or invariants."""


class ParseError(UrbanRiskError):
    """A cell or row of an input file could not be parsed."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class JoinError(UrbanRiskError):
    """Key sets of two inputs that must align do not match."""


class StateError(UrbanRiskError):
    """An object was used in a state it is not in (e.g. unstandardized)."""


class NumericalError(UrbanRiskError):
    """Base class for numerical failures (exit code 4)."""


class DimensionError(NumericalError):
    """Matrix/vector dimensions are inconsistent with the operation."""


class ConvergenceError(NumericalError):
    """An iterative algorithm exhausted its iteration budget."""


class SingularMatrixError(NumericalError):
    """A matrix required to have full rank does not."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class DegenerateDataError(NumericalError):
    """Data degenerate for the requested statistic (zero variance etc.)."""


class DomainError(NumericalError):
    """Argument outside the mathematical domain of a function."""
