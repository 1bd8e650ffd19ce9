"""Exception hierarchy shared across the package."""


class CoxTailError(Exception):
    """Base class for all errors raised by coxtail."""


class DataError(CoxTailError, ValueError):
    """Malformed or invalid survival data.

    ``line`` is the 1-based line number in the source file when the error
    comes from parsing, otherwise ``None``.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConvergenceError(CoxTailError, RuntimeError):
    """Newton iteration failed; ``beta`` holds the last iterate."""

    def __init__(self, message, beta=None, iterations=None):
        super().__init__(message)
        self.beta = beta
        self.iterations = iterations


class SingularInformationError(ConvergenceError):
    """The observed information matrix is singular (monotone likelihood)."""


class SelectionError(CoxTailError, ValueError):
    """A threshold or aggregation procedure has no admissible candidate."""
