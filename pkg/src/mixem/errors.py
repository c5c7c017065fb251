"""Exception types shared across the package."""


class MixemError(Exception):
    """Base class for package errors."""


class InvalidArgumentError(MixemError, ValueError):
    """Raised on malformed input (bad shapes, out-of-domain parameters)."""


class NumericalFailureError(MixemError, ArithmeticError):
    """Raised when a numerical routine cannot meet its accuracy contract.

    Attributes:
        error_estimate: the achieved error estimate, when one is available.
    """

    def __init__(self, message: str, error_estimate: float | None = None):
        super().__init__(message)
        self.error_estimate = error_estimate
