"""StateFrame files: one frame per file, CSV or ``RNSF`` binary.

Binary layout (little-endian): magic ``RNSF``, u32 version=1, u32 channels,
u32 height, u32 width, u64 timestamp_us, then channels*height*width f64
values in row-major order. Flat layers are stored as ``(n, 1, 1)``.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from rnnet.errors import FormatError
from rnnet.reservoir.layer import StateFrame

FRAME_MAGIC = b"RNSF"
FRAME_VERSION = 1
_HEADER = struct.Struct("<4sIIIIQ")


def _as_chw(values: np.ndarray) -> np.ndarray:
    if values.ndim == 1:
        return values.reshape(-1, 1, 1)
    if values.ndim == 2:
        return values[None]
    if values.ndim != 3:
        raise FormatError(f"frames must have rank <= 3, got {values.ndim}")
    return values


def write_frame_binary(frame: StateFrame) -> bytes:
    v = _as_chw(frame.values)
    c, h, w = v.shape
    return _HEADER.pack(FRAME_MAGIC, FRAME_VERSION, c, h, w, frame.timestamp) + v.astype("<f8").tobytes()


def read_frame_binary(data: bytes) -> StateFrame:
    if len(data) < _HEADER.size:
        raise FormatError("truncated frame header")
    magic, version, c, h, w, ts = _HEADER.unpack_from(data)
    if magic != FRAME_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != FRAME_VERSION:
        raise FormatError(f"unsupported frame version {version}")
    n = c * h * w
    if len(data) < _HEADER.size + 8 * n:
        raise FormatError("truncated frame body")
    values = np.frombuffer(data, dtype="<f8", count=n, offset=_HEADER.size).reshape(c, h, w)
    return StateFrame(int(ts), values.astype(np.float64))


def write_frame_csv(frame: StateFrame) -> bytes:
    v = _as_chw(frame.values)
    c, h, w = v.shape
    buf = io.StringIO()
    buf.write(f"# {frame.timestamp},{c},{h},{w}\n")
    for row in v.reshape(c * h, w):
        buf.write(",".join(repr(float(x)) for x in row))
        buf.write("\n")
    return buf.getvalue().encode("ascii")


def read_frame_csv(data: bytes | str) -> StateFrame:
    if isinstance(data, bytes):
        data = data.decode("ascii")
    lines = data.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise FormatError("missing '# t_us,c,h,w' header", line=1)
    try:
        ts, c, h, w = (int(v) for v in lines[0][1:].split(","))
    except ValueError:
        raise FormatError(f"bad header {lines[0]!r}", line=1) from None
    rows = [ln for ln in lines[1:] if ln.strip()]
    if len(rows) != c * h:
        raise FormatError(f"expected {c * h} rows, got {len(rows)}")
    try:
        values = np.array([[float(x) for x in ln.split(",")] for ln in rows])
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    if values.shape != (c * h, w):
        raise FormatError(f"expected {w} columns per row")
    return StateFrame(ts, values.reshape(c, h, w))


def save_frame(frame: StateFrame, path: str | Path) -> None:
    path = Path(path)
    path.write_bytes(write_frame_csv(frame) if path.suffix == ".csv" else write_frame_binary(frame))


def load_frame(path: str | Path) -> StateFrame:
    data = Path(path).read_bytes()
    if data[:4] == FRAME_MAGIC:
        return read_frame_binary(data)
    return read_frame_csv(data)
