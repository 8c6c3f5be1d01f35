"""Exception types shared across the package."""


class NonholoError(Exception):
    """Base class for all package-specific errors."""


class ParseError(NonholoError, ValueError):
    """Raised on malformed expression text.

    ``offset`` is the byte offset (UTF-8) of the first offending character.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DomainError(NonholoError, ArithmeticError):
    """Evaluation left the mathematical domain (pole, sqrt/log of a negative,
    division by zero, or a guarded singular set)."""


class SolverError(NonholoError, RuntimeError):
    """An iterative solver failed to converge.  Carries diagnostics."""

    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class ConfigError(NonholoError, ValueError):
    """Invalid run configuration (CLI exit code 2)."""
