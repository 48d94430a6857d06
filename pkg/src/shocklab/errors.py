"""Exception hierarchy shared by the simulator, the numerics and the CLI."""


class ShocklabError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class UsageError(ShocklabError, ValueError):
    """Invalid arguments or call sequence (bad window, negative time, ...)."""

    exit_code = 2


class ConfigurationError(UsageError):
    """A numeric configuration that cannot work, e.g. a contour through a pole."""


class NumericError(ShocklabError, ArithmeticError):
    """Non-finite values, non-convergence of a refinement or eigensolver."""

    exit_code = 3

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}
