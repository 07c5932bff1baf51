"""Exception hierarchy for the solver package."""


class ScqpError(Exception):
    """Base class for all package errors."""


class ValidationError(ScqpError, ValueError):
    pass


class DimensionMismatch(ValidationError):
    pass


class BoundOrderViolation(ValidationError):
    pass


class NonFiniteEntry(ValidationError):
    pass


class FactorizationFailure(ScqpError):
    """Raised when M = Q + sigma*I + rho*A'A cannot be factorized, even after regularization."""


class NonFiniteIterate(ScqpError, FloatingPointError):
    """ADMM iterates became NaN or infinite (the iteration diverged)."""


class NotSolved(ScqpError):
    """Gradients were requested for a result whose status is not ``solved``."""

    def __init__(self, status):
        super().__init__(f"backward pass requires status 'solved', got {status!r}")
        self.status = status


class OracleInfeasible(ScqpError):
    pass


class TooLarge(ScqpError):
    pass


class PerturbationInfeasible(ScqpError):
    pass
