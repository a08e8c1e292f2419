"""Exception types shared across the package.

Each class carries the CLI exit code it maps to, so the front end never has
to guess which failure family an exception belongs to.
"""


class CorrcoxError(Exception):
    exit_code = 1


class ModelValidationError(CorrcoxError, ValueError):
    """A model, jump law or spec file violates its invariants."""

    exit_code = 2


class ArgumentError(CorrcoxError, ValueError):
    """An operation was called with inputs outside its contract."""

    exit_code = 2


class TailBoundError(ArgumentError):
    """The simulation horizon leaves too much survival mass beyond it."""

    exit_code = 4


class CapacityError(CorrcoxError):
    """Component count exceeds what the subset tables support."""

    exit_code = 3


class NumericalError(CorrcoxError, ArithmeticError):
    """A numerical routine failed to converge.

    ``value`` and ``est_error`` hold the partial result when available.
    """

    exit_code = 4

    def __init__(self, message, value=None, est_error=None, **diagnostics):
        super().__init__(message)
        self.value = value
        self.est_error = est_error
        self.diagnostics = diagnostics


class UnsupportedModelError(CorrcoxError):
    """The requested quantity is not defined for this model family."""

    exit_code = 5
