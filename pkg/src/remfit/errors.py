"""Exception types shared across the package."""


class RemfitError(Exception):
    """Base class for all package errors."""


class ParseError(RemfitError):
    """Malformed input data; carries the 1-based line number when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DataValidationError(RemfitError):
    """Structurally valid input that violates a dataset contract."""


class ConvergenceError(RemfitError):
    """Optimizer failed to converge; carries the objective trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class SingularHessianError(RemfitError):
    """Hessian not invertible, typically from collinear covariates."""


class SimulationGuardError(RemfitError):
    """Simulated intensity exceeded the runaway guard."""
