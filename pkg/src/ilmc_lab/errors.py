"""Exception hierarchy shared by all modules."""


class IlmcError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(IlmcError, ValueError):
    """Invalid construction parameter (non-positive kappa, bad dimension, ...)."""


class AdmissibilityError(IlmcError):
    """Step size too large for the potential's curvature."""


class ConvergenceError(IlmcError):
    """Newton solve exhausted max_iters with residual above tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class CoefficientError(IlmcError):
    """I + tau * hess is singular or indefinite at the evaluation point."""


class InputError(IlmcError, ValueError):
    """Malformed input to a metric (length mismatch, nonpositive value, ...)."""


class ConfigurationError(IlmcError):
    """Invalid solver or experiment configuration."""


class SolverFailure(IlmcError):
    """A PDE solve violated a conservation guarantee (mass drift, ...)."""
