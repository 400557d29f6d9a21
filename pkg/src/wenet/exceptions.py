"""Exception hierarchy shared by every wenet module."""


class WenetError(Exception):
    """Base class for all errors raised by wenet."""


class ArgumentError(WenetError, ValueError):
    """An argument violates an operation's precondition."""


class DimensionError(WenetError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class OutOfRangeError(WenetError, IndexError):
    """A token id is outside the valid range of a table or vocabulary."""

    def __init__(self, message, token_id):
        super().__init__(message)
        self.token_id = token_id


class ConsistencyError(WenetError):
    """A function expected to be deterministic returned different values."""


class NumericError(WenetError, ArithmeticError):
    """A non-finite value appeared where finite values are required."""


class CorpusParseError(WenetError, ValueError):
    """A corpus record could not be parsed."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ConfigError(WenetError, ValueError):
    """A configuration key or value is invalid."""


class CheckpointError(WenetError):
    """Base class for checkpoint loading failures."""


class BadMagicError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass
