"""Event streams: parsing, serialization, synthesis, length regularization, augmentation.

Timestamps are integer microseconds throughout. A stream stores its events as
parallel numpy arrays sorted by ``t`` with ties broken by ``(y, x, p)``.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Literal

import numpy as np

from rnnet.errors import BoundsError, ConfigError, FormatError

BINARY_MAGIC = b"RNEV"
BINARY_VERSION = 1
_HEADER = struct.Struct("<4sIIIQQ")
RECORD_DTYPE = np.dtype(
    [("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1"), ("pad", "u1")]
)

Direction = Literal["left", "right", "up", "down"]


@dataclass(frozen=True)
class Event:
    t: int
    x: int
    y: int
    p: int


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class EventStream:
    """Immutable, time-ordered event sequence with a fixed sensor geometry."""

    width: int
    height: int
    duration: int
    t: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    p: np.ndarray = field(repr=False)

    @classmethod
    def from_arrays(cls, width, height, duration, t, x, y, p, *, presorted=False) -> "EventStream":
        """Validate, sort and freeze raw event columns."""
        width, height, duration = int(width), int(height), int(duration)
        if width <= 0 or height <= 0:
            raise ConfigError(f"geometry must be positive, got {width}x{height}")
        if duration < 0:
            raise ConfigError(f"duration must be non-negative, got {duration}")
        t = np.asarray(t, dtype=np.int64).ravel()
        x = np.asarray(x, dtype=np.int64).ravel()
        y = np.asarray(y, dtype=np.int64).ravel()
        p = np.asarray(p, dtype=np.int64).ravel()
        if not (len(t) == len(x) == len(y) == len(p)):
            raise ConfigError("event columns differ in length")
        if len(t):
            if t.min() < 0:
                raise BoundsError("negative timestamp")
            if t.max() > duration:
                raise BoundsError(f"timestamp {int(t.max())} exceeds duration {duration}")
            if x.min() < 0 or x.max() >= width:
                raise BoundsError(f"x outside [0, {width})")
            if y.min() < 0 or y.max() >= height:
                raise BoundsError(f"y outside [0, {height})")
            if p.min() < 0 or p.max() > 1:
                raise BoundsError("polarity must be 0 or 1")
        if not presorted and len(t) > 1:
            order = np.lexsort((p, x, y, t))
            t, x, y, p = t[order], x[order], y[order], p[order]
        return cls(
            width,
            height,
            duration,
            _readonly(t.astype(np.int64, copy=True)),
            _readonly(x.astype(np.int32, copy=True)),
            _readonly(y.astype(np.int32, copy=True)),
            _readonly(p.astype(np.int8, copy=True)),
        )

    @classmethod
    def empty(cls, width: int, height: int, duration: int = 0) -> "EventStream":
        z = np.zeros(0, dtype=np.int64)
        return cls.from_arrays(width, height, duration, z, z, z, z)

    @property
    def geometry(self) -> tuple[int, int]:
        return (self.width, self.height)

    def __len__(self) -> int:
        return len(self.t)

    def __iter__(self) -> Iterator[Event]:
        for t, x, y, p in zip(self.t.tolist(), self.x.tolist(), self.y.tolist(), self.p.tolist()):
            yield Event(t, x, y, p)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and self.duration == other.duration
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    __hash__ = None  # type: ignore[assignment]

    def node_index(self) -> np.ndarray:
        """Flat reservoir index per event for a ``(2, height, width)`` layer."""
        return (self.p.astype(np.int64) * self.height + self.y) * self.width + self.x

    def replace(self, **changes) -> "EventStream":
        cols = dict(
            width=self.width, height=self.height, duration=self.duration,
            t=self.t, x=self.x, y=self.y, p=self.p,
        )
        cols.update(changes)
        return EventStream.from_arrays(**cols)


# -- CSV -------------------------------------------------------------------


def parse_csv(data: bytes | str) -> EventStream:
    if isinstance(data, bytes):
        data = data.decode("ascii")
    lines = data.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise FormatError("missing '# width,height,duration' header", line=1)
    try:
        width, height, duration = (int(v) for v in lines[0][1:].split(","))
    except ValueError:
        raise FormatError(f"bad header {lines[0]!r}", line=1) from None

    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise FormatError(f"expected 't,x,y,p', got {line!r}", line=lineno)
        try:
            t, x, y, p = (int(v) for v in parts)
        except ValueError:
            raise FormatError(f"non-integer field in {line!r}", line=lineno) from None
        if not (0 <= x < width and 0 <= y < height) or p not in (0, 1) or not 0 <= t <= duration:
            raise BoundsError(f"line {lineno}: event {line!r} outside {width}x{height}, duration {duration}")
        rows.append((t, x, y, p))
    cols = np.array(rows, dtype=np.int64).reshape(-1, 4)
    return EventStream.from_arrays(width, height, duration, *cols.T)


def write_csv(stream: EventStream) -> bytes:
    buf = io.StringIO()
    buf.write(f"# {stream.width},{stream.height},{stream.duration}\n")
    for t, x, y, p in zip(stream.t.tolist(), stream.x.tolist(), stream.y.tolist(), stream.p.tolist()):
        buf.write(f"{t},{x},{y},{p}\n")
    return buf.getvalue().encode("ascii")


# -- binary ----------------------------------------------------------------


def parse_binary(data: bytes) -> EventStream:
    if len(data) < _HEADER.size:
        raise FormatError("truncated header")
    magic, version, width, height, duration, count = _HEADER.unpack_from(data)
    if magic != BINARY_MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != BINARY_VERSION:
        raise FormatError(f"unsupported version {version}")
    need = _HEADER.size + count * RECORD_DTYPE.itemsize
    if len(data) < need:
        raise FormatError(f"truncated: {count} records need {need} bytes, have {len(data)}")
    rec = np.frombuffer(data, dtype=RECORD_DTYPE, count=count, offset=_HEADER.size)
    return EventStream.from_arrays(width, height, duration, rec["t"], rec["x"], rec["y"], rec["p"])


def write_binary(stream: EventStream) -> bytes:
    rec = np.zeros(len(stream), dtype=RECORD_DTYPE)
    rec["t"], rec["x"], rec["y"], rec["p"] = stream.t, stream.x, stream.y, stream.p
    header = _HEADER.pack(BINARY_MAGIC, BINARY_VERSION, stream.width, stream.height, stream.duration, len(stream))
    return header + rec.tobytes()


def load(path: str | Path) -> EventStream:
    """Read a ``.csv`` or binary event file, sniffing the format from its first bytes."""
    data = Path(path).read_bytes()
    if data[:4] == BINARY_MAGIC:
        return parse_binary(data)
    return parse_csv(data)


def save(stream: EventStream, path: str | Path) -> None:
    path = Path(path)
    path.write_bytes(write_csv(stream) if path.suffix == ".csv" else write_binary(stream))


# -- synthesis -------------------------------------------------------------


def synthesize_moving_bar(
    geometry: tuple[int, int],
    direction: Direction,
    speed: float,
    duration: int,
    event_rate: int = 1,
    seed: int = 0,
    *,
    bar_width: int = 4,
    noise_rate: float = 0.0,
) -> EventStream:
    """Events from a bright bar sweeping across the sensor.

    The leading edge emits ON (p=1) events and the trailing edge OFF (p=0)
    events, ``event_rate`` per pixel each time an edge crosses a pixel. The
    bar wraps around a track one bar-width longer than the sensor, starting
    at a seed-dependent phase. ``speed`` is in pixels per second and
    ``noise_rate`` adds uniform background events (per pixel per second).
    """
    width, height = geometry
    if speed <= 0:
        raise ConfigError(f"speed must be positive, got {speed}")
    if duration <= 0:
        raise ConfigError(f"duration must be positive, got {duration}")
    if event_rate < 1:
        raise ConfigError(f"event_rate must be >= 1, got {event_rate}")
    if direction not in ("left", "right", "up", "down"):
        raise ConfigError(f"unknown direction {direction!r}")
    horizontal = direction in ("left", "right")
    length, span = (width, height) if horizontal else (height, width)
    if bar_width < 1 or bar_width > length:
        raise ConfigError(f"bar width {bar_width} does not fit sensor length {length}")

    rng = np.random.default_rng(seed)
    period = length + bar_width
    offset = rng.uniform(0.0, period)
    pixel_time = 1e6 / speed

    cols, times, pols = [], [], []
    for polarity, shift in ((1, 0), (0, bar_width)):
        # edge position along track: offset + speed*t - shift; crosses column c at pos == c (mod period)
        first = (np.arange(length) + shift - offset) % period
        n_laps = int(np.ceil(speed * duration / 1e6 / period)) + 1
        cross = (first[None, :] + period * np.arange(n_laps)[:, None]) * pixel_time
        lap, col = np.nonzero(cross + pixel_time <= duration)
        cols.append(col)
        times.append(cross[lap, col])
        pols.append(np.full(len(col), polarity))
    col = np.concatenate(cols)
    t0 = np.concatenate(times)
    pol = np.concatenate(pols)

    n = len(col) * span * event_rate
    col = np.repeat(col, span * event_rate)
    pol = np.repeat(pol, span * event_rate)
    row = np.tile(np.repeat(np.arange(span), event_rate), len(t0))
    t = np.repeat(t0, span * event_rate) + rng.uniform(0.0, pixel_time, n)
    t = np.minimum(np.floor(t), duration).astype(np.int64)

    if direction in ("left", "up"):
        col = length - 1 - col
    x, y = (col, row) if horizontal else (row, col)

    if noise_rate > 0:
        k = rng.poisson(noise_rate * width * height * duration / 1e6)
        t = np.concatenate([t, rng.integers(0, duration + 1, k)])
        x = np.concatenate([x, rng.integers(0, width, k)])
        y = np.concatenate([y, rng.integers(0, height, k)])
        pol = np.concatenate([pol, rng.integers(0, 2, k)])
    return EventStream.from_arrays(width, height, duration, t, x, y, pol)


# -- regularization and augmentation ---------------------------------------


def regularize_length(stream: EventStream, target: int) -> EventStream:
    """Clip to ``target`` microseconds; shorter clips are padded with silence."""
    if target <= 0:
        raise ConfigError(f"target length must be positive, got {target}")
    keep = stream.t < target
    return EventStream.from_arrays(
        stream.width, stream.height, target,
        stream.t[keep], stream.x[keep], stream.y[keep], stream.p[keep], presorted=True,
    )


@dataclass(frozen=True)
class AugmentSpec:
    center_crop: tuple[int, int] | None = None
    random_crop: tuple[int, int] | None = None
    hflip_prob: float = 0.0
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.hflip_prob <= 1.0:
            raise ConfigError(f"hflip_prob must lie in [0, 1], got {self.hflip_prob}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        for crop in (self.center_crop, self.random_crop):
            if crop is not None and (len(crop) != 2 or min(crop) < 1):
                raise ConfigError(f"bad crop size {crop}")


def _crop(stream: EventStream, w: int, h: int, x0: int, y0: int) -> EventStream:
    keep = (stream.x >= x0) & (stream.x < x0 + w) & (stream.y >= y0) & (stream.y < y0 + h)
    return EventStream.from_arrays(
        w, h, stream.duration,
        stream.t[keep], stream.x[keep] - x0, stream.y[keep] - y0, stream.p[keep], presorted=True,
    )


def _check_fits(stream: EventStream, size: tuple[int, int]) -> tuple[int, int]:
    w, h = size
    if w > stream.width or h > stream.height:
        raise ConfigError(f"crop {w}x{h} larger than geometry {stream.width}x{stream.height}")
    return w, h


def center_crop(stream: EventStream, size: tuple[int, int]) -> EventStream:
    w, h = _check_fits(stream, size)
    return _crop(stream, w, h, (stream.width - w) // 2, (stream.height - h) // 2)


def random_crop(stream: EventStream, size: tuple[int, int], rng: np.random.Generator) -> EventStream:
    w, h = _check_fits(stream, size)
    x0 = int(rng.integers(0, stream.width - w + 1))
    y0 = int(rng.integers(0, stream.height - h + 1))
    return _crop(stream, w, h, x0, y0)


def hflip(stream: EventStream) -> EventStream:
    return stream.replace(x=stream.width - 1 - stream.x)


def augment(stream: EventStream, spec: AugmentSpec, mode: Literal["train", "test"] = "train",
            rng: np.random.Generator | None = None) -> EventStream:
    """Crop/flip pipeline.

    Train mode: center crop, then random crop, then flip with ``hflip_prob``.
    Test mode: a single center crop to the final train-time size.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    if mode == "test":
        final = spec.random_crop or spec.center_crop
        return center_crop(stream, final) if final else stream
    if mode != "train":
        raise ConfigError(f"mode must be 'train' or 'test', got {mode!r}")
    if spec.center_crop:
        stream = center_crop(stream, spec.center_crop)
    if spec.random_crop:
        stream = random_crop(stream, spec.random_crop, rng)
    if spec.hflip_prob > 0 and rng.random() < spec.hflip_prob:
        stream = hflip(stream)
    return stream


def perturb_states(values: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Additive Gaussian noise on retrieved (normalized) reservoir states."""
    if sigma == 0:
        return values
    return values + rng.normal(0.0, sigma, size=values.shape)
