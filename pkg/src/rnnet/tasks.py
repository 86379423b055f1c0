"""Synthetic desk-scale classification tasks built from event streams."""

from __future__ import annotations

import numpy as np

from rnnet.errors import ConfigError
from rnnet.events import EventStream, synthesize_moving_bar
from rnnet.network.config import ReservoirSpec
from rnnet.reservoir import DeviceParams, ReservoirLayer, encode

Clip = tuple[EventStream, int]


def bar_clips(n: int, geometry=(64, 64), duration: int = 1_000_000, seed: int = 0,
              directions=("left", "right")) -> list[Clip]:
    """Moving bars; the label is the index of the sweep direction.

    Speed, bar width, phase and background noise vary per clip.
    """
    rng = np.random.default_rng(seed)
    clips = []
    for i in range(n):
        label = int(rng.integers(len(directions)))
        stream = synthesize_moving_bar(
            geometry, directions[label],
            speed=float(rng.uniform(40.0, 100.0)),
            duration=duration,
            event_rate=int(rng.integers(1, 3)),
            seed=int(rng.integers(2**31)),
            bar_width=int(rng.integers(3, 7)),
            noise_rate=float(rng.uniform(0.0, 1.0)),
        )
        clips.append((stream, label))
    return clips


def long_memory_clips(n: int, geometry=(16, 16), duration: int = 600_000, seed: int = 0, *,
                      window: int = 30_000, patch: int = 5, burst: int = 6,
                      noise_rate: float = 4.0) -> list[Clip]:
    """Class decided by an early spike burst that a last-spike encoder cannot see.

    Every clip has a square patch whose pixels each fire once near the end
    of an early retrieval window. In class-1 clips the same pixels also fire
    a short burst before that final spike. Per-pixel last-spike times, and
    hence time-surface frames read at window ends, are identically
    distributed in both classes; only history-accumulating encoders can
    separate them. The burst window ends well before the clip ends and the
    rest of the clip is label-independent background noise.
    """
    width, height = geometry
    if patch > min(width, height):
        raise ConfigError(f"patch {patch} larger than geometry {geometry}")
    rng = np.random.default_rng(seed)
    clips = []
    for _ in range(n):
        label = int(rng.integers(2))
        w0 = window * int(rng.integers(0, 2))
        x0 = int(rng.integers(0, width - patch + 1))
        y0 = int(rng.integers(0, height - patch + 1))
        xs, ys = np.meshgrid(np.arange(x0, x0 + patch), np.arange(y0, y0 + patch))
        xs, ys = xs.ravel(), ys.ravel()
        last = w0 + rng.integers(window // 2, (5 * window) // 6, len(xs))
        t = [last]
        x = [xs]
        y = [ys]
        if label == 1:
            for _ in range(burst):
                t.append(last - rng.integers(1_000, window // 2 - 1_000, len(xs)))
                x.append(xs)
                y.append(ys)
        k = int(rng.poisson(noise_rate * width * height * duration / 1e6))
        t.append(rng.integers(0, duration + 1, k))
        x.append(rng.integers(0, width, k))
        y.append(rng.integers(0, height, k))
        t = np.concatenate(t)
        x = np.concatenate(x)
        y = np.concatenate(y)
        p = np.ones(len(t), dtype=np.int64)
        p[len(t) - k:] = rng.integers(0, 2, k)
        clips.append((EventStream.from_arrays(width, height, duration, t, x, y, p), label))
    return clips


def make_layer(spec: ReservoirSpec, shape) -> ReservoirLayer:
    if spec.kind == "RN":
        return ReservoirLayer.rn(shape, DeviceParams(spec.p_c, spec.tau_us, spec.g_max))
    if spec.kind == "TS":
        return ReservoirLayer.ts(shape, spec.tau_us)
    return ReservoirLayer.tap(shape, spec.interval_us)


def encode_clips(clips: list[Clip], spec: ReservoirSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Encode every clip with a fresh input reservoir; returns normalized frames, labels, frame times."""
    if not clips:
        return np.zeros((0,)), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    frames = []
    times = None
    for stream, _ in clips:
        layer = make_layer(spec, (2, stream.height, stream.width))
        enc = encode(stream, layer, spec.interval_us)
        frames.append(enc.frames / enc.full_scale)
        times = enc.times
    return np.stack(frames), np.array([c[1] for c in clips], dtype=np.int64), times
