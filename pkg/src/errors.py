"""Exception hierarchy shared by the gate toolkit modules."""


class GateToolkitError(Exception):
    """Base class for every error raised by the toolkit."""


class InvalidParameterError(GateToolkitError, ValueError):
    pass


class UnsupportedShapeError(GateToolkitError, ValueError):
    pass


class UnsupportedOrderError(GateToolkitError, ValueError):
    pass


class IllConditionedError(GateToolkitError, ValueError):
    pass


class CalibrationError(GateToolkitError, ValueError):
    pass


class FitError(GateToolkitError, ValueError):
    pass


class NumericFailureError(GateToolkitError, RuntimeError):
    """
    Raised when a numerical routine cannot reach the requested accuracy.

    Parameters:
    message: human readable description
    error_estimate: achieved error estimate (absolute), if known
    report: optional dict with convergence details (cutoffs, steps, deltas)
    """

    def __init__(self, message, error_estimate=None, report=None):
        super().__init__(message)
        self.error_estimate = error_estimate
        self.report = report or {}


class InvariantViolation(GateToolkitError, RuntimeError):
    """An asserted physical or statistical property does not hold."""

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details or {}


def require(condition, message, error=InvalidParameterError):
    if not condition:
        raise error(message)
