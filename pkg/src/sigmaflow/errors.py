"""Exception hierarchy shared by all modules."""


class SigmaflowError(Exception):
    """Base class for package errors."""


class InvalidProblemError(SigmaflowError, ValueError):
    """Parameters violate the problem invariants."""


class DomainError(SigmaflowError, ValueError):
    """Argument outside the domain of a function."""


class CaseMismatchError(SigmaflowError):
    """Operation requested for a case it does not apply to."""


class InconsistencyError(SigmaflowError):
    """An internal identity or bracketing assumption failed."""


class IntegrityError(SigmaflowError):
    """A flow state violates monotonicity or positivity."""


class SchemeError(SigmaflowError):
    """Time stepping failed even after repeated step reduction."""


class RelaxationError(SigmaflowError):
    """Projected SOR stopped decreasing the energy."""


class InsufficientResolutionError(SigmaflowError):
    """Not enough samples inside a fit window."""


class FitRejectedError(SigmaflowError):
    """Fit ran but the data show no cone-type asymptote."""

    def __init__(self, message, exponent=None):
        super().__init__(message)
        self.exponent = exponent
