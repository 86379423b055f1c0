"""``RNWT`` weight checkpoints.

Layout (little-endian): magic ``RNWT``, u32 version=1, u32 tensor count, then
per tensor: u32 name length, UTF-8 name, u32 rank, rank x u64 dims, float64
data. Tensors are written in sorted name order so files are byte-stable.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from rnnet.errors import FormatError

MAGIC = b"RNWT"
VERSION = 1


def dumps(params: dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name in sorted(params):
        a = np.ascontiguousarray(params[name], dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}Q", *a.shape))
        parts.append(a.tobytes())
    return b"".join(parts)


def loads(data: bytes) -> dict[str, np.ndarray]:
    if data[:4] != MAGIC:
        raise FormatError(f"bad checkpoint magic {data[:4]!r}")
    try:
        version, count = struct.unpack_from("<II", data, 4)
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        off = 12
        out = {}
        for _ in range(count):
            (n,) = struct.unpack_from("<I", data, off)
            off += 4
            name = data[off:off + n].decode("utf-8")
            off += n
            (rank,) = struct.unpack_from("<I", data, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}Q", data, off)
            off += 8 * rank
            size = int(np.prod(dims)) if rank else 1
            if off + 8 * size > len(data):
                raise FormatError(f"truncated tensor {name!r}")
            out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(dims).astype(np.float64)
            off += 8 * size
    except struct.error as exc:
        raise FormatError(f"truncated checkpoint: {exc}") from None
    return out


def save(params: dict[str, np.ndarray], path: str | Path) -> None:
    Path(path).write_bytes(dumps(params))


def load(path: str | Path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())
