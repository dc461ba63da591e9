"""Exception hierarchy shared by the solvers and the command line."""


class EllipsoidError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ConfigError(EllipsoidError):
    exit_code = 2


class ConvergenceError(EllipsoidError):
    """An iteration hit its cap; ``history`` holds the residual trace."""

    exit_code = 3

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class DivergenceError(EllipsoidError):
    """Non-finite values appeared while integrating; ``time`` is where."""

    exit_code = 3

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class StabilityError(EllipsoidError):
    """Shifted dynamics are not exponentially stable (no periodic solution)."""

    exit_code = 4


class AssumptionError(EllipsoidError):
    """A structural assumption (definiteness, normalization, positivity) failed."""

    exit_code = 4
