"""Exception types shared by all pddopt modules."""


class PddOptError(Exception):
    """Base class for all pddopt errors."""


class InvalidInputError(PddOptError, ValueError):
    """An argument violates a documented precondition."""


class NumericalFailureError(PddOptError, RuntimeError):
    """A numerical kernel failed to meet its residual contract.

    Carries optional diagnostics (residual, condition estimate) so callers
    can report iteration context.
    """

    def __init__(self, message, residual=None, cond=None):
        super().__init__(message)
        self.residual = residual
        self.cond = cond


class UnsupportedOperationError(PddOptError, NotImplementedError):
    """The problem object does not support the requested diagnostic."""
