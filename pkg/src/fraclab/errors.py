"""Exception hierarchy shared by all fraclab modules."""


class FraclabError(Exception):
    """Base class for every error raised by fraclab."""


class ConfigurationError(FraclabError, ValueError):
    """Invalid parameters or configuration values."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        self.errors = list(errors) if errors else [message]


class GeometryError(FraclabError, ValueError):
    """Cells overlap, a point sits on the boundary, or a support touches a set."""


class EvaluationError(FraclabError, ValueError):
    """A closed-form field returned a non-finite value."""


class DivergenceError(FraclabError, ValueError):
    """A far-field integral does not converge for the given growth."""


class SingularCaseError(FraclabError):
    """Pointwise evaluation requested where the principal value may not exist.

    For ``p < 2`` the singular integral only converges for
    ``s < 2 (p - 1) / p``; outside that range callers must opt in explicitly.
    """


class ConvergenceError(FraclabError):
    """A limiting procedure failed to converge; ``diagnostics`` holds details."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


class NumericalError(FraclabError, ArithmeticError):
    """NaN or overflow inside an iterative computation."""


class PreconditionError(FraclabError, ValueError):
    """Input data violate a documented precondition of a checker."""
