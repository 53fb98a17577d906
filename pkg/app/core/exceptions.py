"""Custom exceptions for the application."""


class RelicException(Exception):
    """Base exception for the ReLIC engine."""

    exit_code: int = 1

    def __init__(self, message: str, error_code: str = None):
        self.message = message
        self.error_code = error_code
        super().__init__(self.message)


class ConfigurationError(RelicException):
    """Configuration related errors."""

    exit_code = 2


class NumericError(RelicException):
    """NaN/Inf in a loss, gradient or parameter."""

    exit_code = 3


class FormatError(RelicException):
    """Malformed checkpoint, dataset or mask file."""

    exit_code = 4


class DimensionError(RelicException):
    """Tensor or view shapes that do not line up."""

    pass


class ContractError(RelicException):
    """A caller broke an operation's precondition."""

    pass


class DegenerateError(RelicException):
    """Input that admits no meaningful result (e.g. a single class)."""

    pass
