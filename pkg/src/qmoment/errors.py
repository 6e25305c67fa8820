"""Exception and warning types shared across the package."""


class QMomentError(Exception):
    """Base class for all package errors."""


class ValidationError(QMomentError):
    """A problem input violates a structural invariant."""


class HyperplaneSupportedError(ValidationError):
    """The target measure is concentrated on an affine hyperplane."""


class NonzeroBarycenterError(ValidationError):
    """The target measure is not centered and auto-centering is disabled."""


class DomainError(QMomentError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SizeExceededError(QMomentError):
    """An exact solve was requested on an instance above the size guard."""


class NonconvergenceError(QMomentError):
    """An iteration cap was hit before reaching the requested tolerance.

    Carries the last partial report (when available) in ``report``.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class MassUnreachableError(QMomentError):
    """Unit mass cannot be reached on the current grid; the box is too small."""


class WrongExponentError(QMomentError):
    """Surface construction requires exponent q = 2."""


class NotConvergedError(QMomentError):
    """An operation requires a converged solve report."""


class OriginOutsideError(QMomentError):
    """Polar dual requires the origin strictly inside the body."""


class UnsupportedDimensionError(QMomentError):
    """The operation is not implemented in this ambient dimension."""


class EmptyCellWarning(UserWarning):
    """An atom with positive weight received no grid mass at the dual optimum."""
