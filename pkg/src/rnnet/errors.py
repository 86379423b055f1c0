"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems -> 2,
I/O and file-format problems -> 3, numeric failures -> 4.
"""


class RNNetError(Exception):
    """Base class for package errors."""


class ConfigError(RNNetError, ValueError):
    """Invalid parameters or configuration."""


class ShapeError(ConfigError):
    """Tensor or layer shapes do not chain."""


class ConsistencyError(ConfigError):
    """Inputs that should describe the same run disagree."""


class BoundsError(RNNetError, ValueError):
    """An event coordinate or polarity lies outside the stream geometry."""


class FormatError(RNNetError, ValueError):
    """Malformed event, frame, or checkpoint file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OrderingError(RNNetError, ValueError):
    """A spike or read arrived earlier than the node's last update."""


class NumericError(RNNetError, ArithmeticError):
    """Non-finite values where finite ones are required."""
