"""Reservoir encoders and their compiled/pure-Python event kernels."""

from rnnet.reservoir.backend import NAME as BACKEND
from rnnet.reservoir.layer import (
    KINDS,
    DeviceParams,
    Encoding,
    ReservoirLayer,
    StateFrame,
    dense_rn_reference,
    encode,
    encode_stream,
    retrieval_times,
)

__all__ = [
    "BACKEND",
    "KINDS",
    "DeviceParams",
    "Encoding",
    "ReservoirLayer",
    "StateFrame",
    "dense_rn_reference",
    "encode",
    "encode_stream",
    "retrieval_times",
]
