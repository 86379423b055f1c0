"""Batched forward pass of the hybrid network.

One clip is a sequence of K input-reservoir frames. Layers before the spike
conversion run on every frame (batched over clips x frames), their thresholded
outputs drive the feature reservoir at the frame instants, and the layers
after it run on each of the J feature-reservoir reads. Logits are the sum of
the J classifier outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from rnnet.errors import NumericError, ShapeError
from rnnet.network import layers as L
from rnnet.network.config import NetworkConfig
from rnnet.reservoir import StateFrame
from rnnet.reservoir.passwise import PassEncoding, pass_encode

Params = dict[str, np.ndarray]


def init_params(cfg: NetworkConfig, seed: int = 0) -> Params:
    """Uniform(+-sqrt(1/fan_in)) weights and biases; batchnorm gamma=1, beta=0."""
    rng = np.random.default_rng(seed)
    params: Params = {}
    shapes = cfg.shapes()
    prev = cfg.input_shape
    for (name, shape), spec in zip(shapes, cfg.layers):
        if spec.layer == "conv":
            fan_in = prev[0] * spec.kernel ** 2
            bound = np.sqrt(1.0 / fan_in)
            params[f"{name}.weight"] = rng.uniform(-bound, bound, (spec.out_channels, prev[0], spec.kernel, spec.kernel))
            params[f"{name}.bias"] = rng.uniform(-bound, bound, spec.out_channels)
        elif spec.layer == "fc":
            bound = np.sqrt(1.0 / prev[0])
            params[f"{name}.weight"] = rng.uniform(-bound, bound, (spec.out_channels, prev[0]))
            params[f"{name}.bias"] = rng.uniform(-bound, bound, spec.out_channels)
        elif spec.layer == "batchnorm":
            c = shape[0]
            params[f"{name}.gamma"] = np.ones(c)
            params[f"{name}.beta"] = np.zeros(c)
            params[f"{name}.running_mean"] = np.zeros(c)
            params[f"{name}.running_var"] = np.ones(c)
        prev = shape
    return params


def trainable(name: str) -> bool:
    return not name.endswith((".running_mean", ".running_var"))


@dataclass
class ForwardTrace:
    """Everything the backward pass and the energy report need from one forward call."""

    pre_caches: list
    post_caches: list
    sc_input: np.ndarray  # (B, K, N) pre-threshold values
    spikes: np.ndarray  # (B, K, N)
    rf: PassEncoding
    potentials: np.ndarray  # (B, J, C) classifier output per feature read
    logits: np.ndarray  # (B, C) accumulated potentials
    running_stats: dict[str, np.ndarray] = field(default_factory=dict)
    spike_times: np.ndarray | None = None
    read_times: np.ndarray | None = None
    sc_mode: str = "heaviside"
    alpha: float = 2.0

    @property
    def cumulative_potentials(self) -> np.ndarray:
        return np.cumsum(self.potentials, axis=1)


def _run_layers(cfg, params, specs, names, x, mode, caches, stats):
    for name, spec in zip(names, specs):
        kind = spec.layer
        if kind == "conv":
            x, c = L.conv2d_forward(x, params[f"{name}.weight"], params[f"{name}.bias"], spec.pad, spec.stride)
        elif kind == "maxpool":
            x, c = L.maxpool_forward(x, spec.kernel, spec.pad, spec.stride)
        elif kind == "batchnorm":
            x, c, (rm, rv) = L.batchnorm_forward(
                x, params[f"{name}.gamma"], params[f"{name}.beta"],
                params[f"{name}.running_mean"], params[f"{name}.running_var"], mode,
            )
            stats[f"{name}.running_mean"], stats[f"{name}.running_var"] = rm, rv
        elif kind == "relu":
            x, c = L.relu_forward(x)
        elif kind == "flatten":
            c = x.shape
            x = x.reshape(x.shape[0], -1)
        elif kind == "fc":
            x, c = L.fc_forward(x, params[f"{name}.weight"], params[f"{name}.bias"])
        else:  # pragma: no cover - validate() guarantees kinds
            raise ShapeError(f"unexpected layer {kind}")
        caches.append(c)
    return x


def forward_batch(cfg: NetworkConfig, params: Params, frames: np.ndarray, mode: str = "eval", *,
                  frame_times: Sequence[int] | None = None, sc_mode: str = "heaviside",
                  alpha: float = 2.0, rf_coeff: np.ndarray | None = None) -> tuple[np.ndarray, ForwardTrace]:
    """Run a batch of clips.

    ``frames`` is ``(B, K, 2, H, W)`` of normalized input-reservoir states.
    ``sc_mode="smooth"`` replaces the threshold with the ATan primitive so the
    whole graph is differentiable (gradient checking only); ``rf_coeff``
    freezes the feature-reservoir potentiation coefficients.
    """
    frames = np.asarray(frames, dtype=float)
    if frames.ndim != 5 or frames.shape[2:] != cfg.input_shape:
        raise ShapeError(f"frames {frames.shape} do not match (B, K) + {cfg.input_shape}")
    b, k = frames.shape[:2]
    t_in = cfg.r_in.interval_us
    spike_times = np.asarray(frame_times if frame_times is not None else t_in * np.arange(1, k + 1), dtype=np.int64)
    duration = int(spike_times[-1]) if k else 0
    read_times = cfg.r_f.interval_us * np.arange(1, duration // cfg.r_f.interval_us + 1, dtype=np.int64)
    if len(read_times) == 0:
        raise ShapeError(f"{k} passes are shorter than one feature-reservoir interval")

    names = cfg.layer_names()
    sc = cfg.sc_index
    stats: dict[str, np.ndarray] = {}
    pre_caches: list = []
    x = _run_layers(cfg, params, cfg.layers[:sc], names[:sc], frames.reshape((b * k,) + cfg.input_shape),
                    mode, pre_caches, stats)
    sc_input = x.reshape(b, k, -1)
    thr = cfg.layers[sc].threshold if cfg.layers[sc].threshold is not None else cfg.sc_threshold
    if sc_mode == "smooth":
        spikes = L.atan_primitive(sc_input, thr, alpha)
    else:
        spikes = L.spike_convert(sc_input, thr)

    r = cfg.r_f
    rf = pass_encode(spikes, spike_times, read_times, r.kind, p_c=r.p_c, tau=r.tau_us,
                     window=r.interval_us, coeff=rf_coeff)
    j = rf.reads.shape[1]
    post_caches: list = []
    out = _run_layers(cfg, params, cfg.layers[sc + 1:], names[sc + 1:], rf.reads.reshape(b * j, -1),
                      mode, post_caches, stats)
    potentials = out.reshape(b, j, -1)
    logits = potentials.sum(axis=1)
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite logits")
    trace = ForwardTrace(pre_caches, post_caches, sc_input, spikes, rf, potentials, logits, stats,
                         spike_times, read_times, sc_mode, alpha)
    return logits, trace


def stack_frames(cfg: NetworkConfig, frames: Sequence[StateFrame]) -> tuple[np.ndarray, np.ndarray]:
    """Normalize a clip's input-reservoir frames into a ``(1, K, 2, H, W)`` batch."""
    values = np.stack([f.values for f in frames]) / cfg.r_in.full_scale
    times = np.array([f.timestamp for f in frames], dtype=np.int64)
    return values[None], times


def forward_clip(cfg: NetworkConfig, stream_frames: Sequence[StateFrame], params: Params):
    """Inference on one clip; returns ``(logits, trace)`` with logits of shape ``(num_classes,)``."""
    if len(stream_frames) != cfg.num_passes:
        raise ShapeError(f"clip has {len(stream_frames)} frames, config expects {cfg.num_passes}")
    batch, times = stack_frames(cfg, stream_frames)
    logits, trace = forward_batch(cfg, params, batch, "eval", frame_times=times)
    return logits[0], trace


def mlp_forward(cfg: NetworkConfig, params: Params, x: np.ndarray, mode: str = "eval") -> np.ndarray:
    """Classifier layers (everything after the spike conversion) on a ``(batch, N)`` input."""
    names = cfg.layer_names()
    sc = cfg.sc_index
    return _run_layers(cfg, params, cfg.layers[sc + 1:], names[sc + 1:], np.atleast_2d(x), mode, [], {})
