"""Reservoir-node encoding of event-camera streams with a hybrid reservoir/DNN classifier."""

from rnnet.errors import (
    BoundsError,
    ConfigError,
    ConsistencyError,
    FormatError,
    NumericError,
    OrderingError,
    RNNetError,
    ShapeError,
)

__version__ = "0.1.0"

__all__ = [
    "BoundsError",
    "ConfigError",
    "ConsistencyError",
    "FormatError",
    "NumericError",
    "OrderingError",
    "RNNetError",
    "ShapeError",
    "__version__",
]
