"""Exception hierarchy.

Validation problems (bad inputs, unsupported shapes) derive from
``ValidationError``; failures of a numerical method on valid inputs derive
from ``NumericalError``.  The CLI maps these to exit codes 1 and 2.
"""


class RSGBMError(Exception):
    """Base class for all package errors."""


class ValidationError(RSGBMError, ValueError):
    pass


class NumericalError(RSGBMError, ArithmeticError):
    pass


class DimensionMismatch(ValidationError):
    pass


class InvalidGenerator(ValidationError):
    pass


class SingularCovariance(ValidationError):
    pass


class NegativeRate(ValidationError):
    pass


class NonPositiveVol(ValidationError):
    pass


class NegativeTime(ValidationError):
    pass


class MultiAssetUnsupported(ValidationError):
    pass


class MissingGradient(ValidationError):
    pass


class NoValidGenerator(NumericalError):
    pass


class BoundViolation(NumericalError):
    pass


class QuadratureNotConverged(NumericalError):
    pass


class CholeskyFailure(NumericalError):
    pass


class PricerFailure(NumericalError):
    pass


class GridTooCoarse(UserWarning):
    """Emitted when many regime jumps fall between consecutive hedge dates."""
