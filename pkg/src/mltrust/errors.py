"""Exception hierarchy shared by the library and the command-line front end."""


class MLTrustError(Exception):
    """Base class for every error raised by this package."""


class ScenarioError(MLTrustError, ValueError):
    """Malformed scenario or query input."""

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class CeilingError(MLTrustError):
    """Contingency count above the exhaustive-enumeration ceiling."""


class BudgetError(MLTrustError):
    """Requested search exceeds its evaluation budget."""


class ConvergenceError(MLTrustError, ArithmeticError):
    """A root finder or optimizer did not reach its tolerance."""


class UndefinedModelError(MLTrustError, ValueError):
    """Noisy-observation model with a null history (variance v/p undefined)."""


class FalsificationError(MLTrustError, AssertionError):
    """A numerical check contradicted one of the proven bounds."""
