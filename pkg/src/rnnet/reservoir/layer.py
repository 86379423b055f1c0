"""Reservoir layers: reservoir-node (RN), time-surface (TS) and temporal-average-pool (TAP).

Time runs on an integer 1 µs grid. An RN node follows, per grid step,

    G[t] = p_c * (g_max - G[t-1]) * spike[t] + G[t-1] * exp(-1 / tau)

with ``tau`` in microseconds. The layer evaluates this lazily: a node is only
touched when it spikes or is read, using the closed-form decay between
events. :func:`dense_rn_reference` is the literal per-step simulation used to
check it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from rnnet.errors import ConfigError, OrderingError, ShapeError
from rnnet.events import EventStream
from rnnet.reservoir.backend import kernels as _default_kernels

Kind = Literal["RN", "TS", "TAP"]
KINDS: tuple[str, ...] = ("RN", "TS", "TAP")


@dataclass(frozen=True)
class DeviceParams:
    """Short-term-memory device: potentiation factor, relaxation time (µs), max state (S)."""

    p_c: float = 0.5
    tau: float = 60_000.0
    g_max: float = 100e-6

    def __post_init__(self):
        if not 0.0 < self.p_c <= 1.0:
            raise ConfigError(f"p_c must lie in (0, 1], got {self.p_c}")
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if not self.g_max > 0:
            raise ConfigError(f"g_max must be positive, got {self.g_max}")


@dataclass(frozen=True, eq=False)
class StateFrame:
    timestamp: int
    values: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ConfigError("state frame contains non-finite values")
        self.values.flags.writeable = False

    def __eq__(self, other):
        if not isinstance(other, StateFrame):
            return NotImplemented
        return self.timestamp == other.timestamp and np.array_equal(self.values, other.values)

    __hash__ = None  # type: ignore[assignment]


class ReservoirLayer:
    """Array of independent reservoir nodes with lazily evaluated state.

    ``param`` is a :class:`DeviceParams` for RN, the decay constant ``tau``
    (µs) for TS, and the pooling window (µs) for TAP. Spikes must be applied
    in non-decreasing time order per node; repeated spikes on a node within
    the same microsecond count once.
    """

    def __init__(self, kind: Kind, shape: Sequence[int] | int, param, *, kernels=None):
        if kind not in KINDS:
            raise ConfigError(f"unknown reservoir kind {kind!r}")
        self.kind = kind
        self.shape = (int(shape),) if np.isscalar(shape) else tuple(int(s) for s in shape)
        self.size = int(np.prod(self.shape))
        if kind == "RN":
            if not isinstance(param, DeviceParams):
                raise ConfigError("RN layer needs DeviceParams")
        elif kind == "TS":
            param = float(param)
            if param <= 0:
                raise ConfigError(f"TS tau must be positive, got {param}")
        else:
            param = int(param)
            if param <= 0:
                raise ConfigError(f"TAP window must be positive, got {param}")
        self.param = param
        self._k = kernels or _default_kernels
        self.reset()

    @classmethod
    def rn(cls, shape, params: DeviceParams = DeviceParams(), **kw) -> "ReservoirLayer":
        return cls("RN", shape, params, **kw)

    @classmethod
    def ts(cls, shape, tau: float, **kw) -> "ReservoirLayer":
        return cls("TS", shape, tau, **kw)

    @classmethod
    def tap(cls, shape, window: int, **kw) -> "ReservoirLayer":
        return cls("TAP", shape, window, **kw)

    def reset(self) -> None:
        self.state = np.zeros(self.size)
        self.last = np.full(self.size, -1, dtype=np.int64)
        self._latest = -1

    @property
    def full_scale(self) -> float:
        """Upper bound of a node's read value used for normalization (1 for TS/TAP)."""
        return self.param.g_max if self.kind == "RN" else 1.0

    @property
    def last_event_time(self) -> np.ndarray:
        return np.maximum(self.last, 0)

    def run(self, t, node, reads=()) -> tuple[np.ndarray, np.ndarray | None]:
        """Apply time-sorted spikes, reading all nodes at each time in ``reads``.

        Returns the ``(len(reads), size)`` read matrix and, for RN, the
        pre-spike state of every event (NaN where a same-instant repeat was
        coalesced).
        """
        t = np.ascontiguousarray(t, dtype=np.int64)
        node = np.ascontiguousarray(node, dtype=np.int64)
        reads = np.ascontiguousarray(reads, dtype=np.int64)
        if len(t) != len(node):
            raise ConfigError("spike times and node indices differ in length")
        if len(node) and (node.min() < 0 or node.max() >= self.size):
            raise ShapeError(f"node index outside layer of {self.size} nodes")
        if len(reads):
            if np.any(np.diff(reads) < 0):
                raise OrderingError("read times must be non-decreasing")
            if reads[0] < self._latest:
                raise OrderingError(f"read at {reads[0]} precedes last update at {self._latest}")
        out = np.empty((len(reads), self.size))
        pre = None
        if self.kind == "RN":
            pre = np.empty(len(t))
            p = self.param
            bad = self._k.rn_run(t, node, reads, self.state, self.last, p.p_c, p.tau, p.g_max, out, pre)
        elif self.kind == "TS":
            bad = self._k.ts_run(t, node, reads, self.last, self.param, out)
        else:
            bad = self._k.tap_run(t, node, reads, self.state, self.last, self.param, out)
        if bad >= 0:
            raise OrderingError(f"spike {bad} at t={t[bad]} precedes node {node[bad]}'s last update")
        if len(t):
            self._latest = max(self._latest, int(t.max()))
        return out, pre

    def apply_spike(self, node_index: int, t: int):
        _, pre = self.run([t], [node_index])
        return None if pre is None else float(pre[0])

    def apply_events(self, t, node):
        return self.run(t, node)[1]

    def read(self, t: int) -> StateFrame:
        out, _ = self.run([], [], [t])
        return StateFrame(int(t), out[0].reshape(self.shape))


@dataclass(frozen=True, eq=False)
class Encoding:
    """Frames retrieved while encoding one stream, plus the per-spike log."""

    times: np.ndarray
    frames: np.ndarray
    pre_spike: np.ndarray | None
    full_scale: float

    @property
    def spike_count(self) -> int:
        if self.pre_spike is None:
            return 0
        return int(np.count_nonzero(~np.isnan(self.pre_spike)))

    @property
    def pre_spike_sum(self) -> float:
        """Sum of pre-spike conductances over applied spikes (0 for TS/TAP)."""
        if self.pre_spike is None:
            return 0.0
        return float(np.nansum(self.pre_spike))

    def state_frames(self) -> list[StateFrame]:
        return [StateFrame(int(t), f) for t, f in zip(self.times, self.frames)]


def retrieval_times(duration: int, interval: int) -> np.ndarray:
    if interval <= 0:
        raise ConfigError(f"retrieval interval must be positive, got {interval}")
    return interval * np.arange(1, duration // interval + 1, dtype=np.int64)


def encode(stream: EventStream, layer: ReservoirLayer, retrieval_interval: int) -> Encoding:
    """Drive ``layer`` with every event of ``stream`` and read it every ``retrieval_interval`` µs."""
    expected = (2, stream.height, stream.width)
    if layer.shape != expected:
        raise ShapeError(f"layer shape {layer.shape} does not match stream {expected}")
    times = retrieval_times(stream.duration, retrieval_interval)
    out, pre = layer.run(stream.t, stream.node_index(), times)
    return Encoding(times, out.reshape((len(times),) + layer.shape), pre, layer.full_scale)


def encode_stream(stream: EventStream, layer: ReservoirLayer, retrieval_interval: int) -> list[StateFrame]:
    return encode(stream, layer, retrieval_interval).state_frames()


def dense_rn_reference(t, node, n_nodes: int, p_c, tau, g_max, read_times) -> np.ndarray:
    """Step every node on the 1 µs grid from t=0 to the last read time.

    ``p_c``, ``tau`` and ``g_max`` may be scalars or per-node arrays. Returns
    the ``(len(read_times), n_nodes)`` state matrix.
    """
    t = np.asarray(t, dtype=np.int64)
    node = np.asarray(node, dtype=np.int64)
    read_times = np.asarray(read_times, dtype=np.int64)
    pc = np.broadcast_to(np.asarray(p_c, dtype=float), (n_nodes,))
    gmax = np.broadcast_to(np.asarray(g_max, dtype=float), (n_nodes,))
    decay = np.exp(-1.0 / np.broadcast_to(np.asarray(tau, dtype=float), (n_nodes,)))

    order = np.argsort(t, kind="stable")
    t, node = t[order], node[order]
    spike_steps, starts = np.unique(t, return_index=True)
    groups = np.split(node, starts[1:]) if len(t) else []
    spikes = {int(s): np.unique(g) for s, g in zip(spike_steps, groups)}

    horizon = int(read_times.max()) if len(read_times) else 0
    reads_at: dict[int, list[int]] = {}
    for i, r in enumerate(read_times.tolist()):
        reads_at.setdefault(r, []).append(i)

    g = np.zeros(n_nodes)
    out = np.empty((len(read_times), n_nodes))
    for step in range(horizon + 1):
        hit = spikes.get(step)
        if hit is None:
            g *= decay
        else:
            prev = g[hit]
            g *= decay
            g[hit] = pc[hit] * (gmax[hit] - prev) + prev * decay[hit]
        for i in reads_at.get(step, ()):
            out[i] = g
    return out
