"""Exception types shared across the solver."""


class TorusMFGError(Exception):
    """Base class for all package errors."""


class ConfigError(TorusMFGError):
    """Malformed configuration file.

    Carries the 1-based line number of the offending entry when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConvergenceError(TorusMFGError):
    """An iterative solver exhausted its iteration budget.

    ``history`` holds the residual trace so callers can diagnose stalls
    or oscillation.
    """

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class DomainError(TorusMFGError):
    """An input left the mathematical domain of an operation."""


class SearchRadiusError(TorusMFGError):
    """A control maximizer landed on the boundary of the search ball."""


class InvariantViolation(TorusMFGError):
    """A converged solution failed one of its structural checks."""
