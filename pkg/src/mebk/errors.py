"""Exception hierarchy shared by all modules."""


class MEBKError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(MEBKError, ValueError):
    """Invalid model or algorithm parameter."""


class DomainError(MEBKError, ValueError):
    """Evaluation point or observation outside the declared support."""


class NumericalError(MEBKError, ArithmeticError):
    """A numerical routine produced a non-finite or unusable result."""


class IntegrationError(NumericalError):
    """The integrand returned NaN at a cubature node."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point
