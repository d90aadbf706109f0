"""Exception hierarchy shared by every solver module."""


class OTError(Exception):
    """Base class for all errors raised by :mod:`otred`."""


class ValidationError(OTError, ValueError):
    """Input data violates a documented precondition."""


class DimensionMismatch(ValidationError):
    pass


class NegativeEntry(ValidationError):
    pass


class NonFiniteEntry(ValidationError):
    pass


class NotNormalized(ValidationError):
    pass


class ZeroMarginal(ValidationError):
    """A marginal has a zero entry on a path that needs strictly positive marginals."""


class InvalidEpsilon(ValidationError):
    pass


class InvalidDimension(ValidationError):
    pass


class ZeroCostMatrix(ValidationError):
    pass


class UnbalancedSides(ValidationError):
    pass


class NotSubfeasible(ValidationError):
    pass


class ZeroMass(ValidationError):
    pass


class EmptySupport(ValidationError):
    pass


class MarginalMismatch(ValidationError):
    pass


class NotACoupling(ValidationError):
    pass


class TooLarge(ValidationError):
    pass


class NotScalable(OTError):
    """Some row or column of the kernel is identically zero."""


class NotConverged(OTError):
    """An iterative solver hit its iteration cap.

    ``report`` carries whatever partial information the solver had, e.g. the
    best residual reached, so callers can still log it.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report if report is not None else {}
