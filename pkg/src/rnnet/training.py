"""Clip-level training: one loss per clip, surrogate gradient at the spike conversion only."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from rnnet.errors import ConfigError, NumericError, ShapeError
from rnnet.network import layers as L
from rnnet.network.config import NetworkConfig
from rnnet.network.model import ForwardTrace, Params, forward_batch, init_params, trainable
from rnnet.reservoir.passwise import pass_backward

log = logging.getLogger(__name__)

HISTORY_FIELDS = ("epoch", "train_loss", "train_acc", "test_acc", "lr")


# -- loss ----------------------------------------------------------------------


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss(logits, label) -> float:
    """Categorical cross-entropy ``-log softmax(logits)[label]``, averaged over a batch."""
    return loss_and_grad(logits, label)[0]


def loss_and_grad(logits, labels) -> tuple[float, np.ndarray]:
    logits = np.asarray(logits, dtype=float)
    single = logits.ndim == 1
    z = np.atleast_2d(logits)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite logits")
    if len(labels) != len(z) or labels.min() < 0 or labels.max() >= z.shape[1]:
        raise ConfigError(f"labels {labels} out of range for {z.shape[1]} classes")
    shifted = z - z.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(len(z))
    value = float(-logp[rows, labels].mean())
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    grad /= len(z)
    return value, (grad[0] if single else grad)


# -- backward ------------------------------------------------------------------


def _backprop_layers(cfg, params, specs, names, caches, dout, grads, need_input_grad):
    for i in range(len(specs) - 1, -1, -1):
        spec, name, cache = specs[i], names[i], caches[i]
        need_dx = need_input_grad or i > 0
        kind = spec.layer
        if kind == "conv":
            dout, grads[f"{name}.weight"], grads[f"{name}.bias"] = L.conv2d_backward(dout, cache, need_dx)
        elif kind == "maxpool":
            dout = L.maxpool_backward(dout, cache, need_dx)
        elif kind == "batchnorm":
            dout, grads[f"{name}.gamma"], grads[f"{name}.beta"] = L.batchnorm_backward(dout, cache)
        elif kind == "relu":
            dout = L.relu_backward(dout, cache)
        elif kind == "flatten":
            dout = dout.reshape(cache)
        elif kind == "fc":
            dout, grads[f"{name}.weight"], grads[f"{name}.bias"] = L.fc_backward(
                dout, cache, params[f"{name}.weight"], need_dx)
        if dout is None:
            break
    return dout


def backward_clip(cfg: NetworkConfig, trace: ForwardTrace, params: Params, labels,
                  loss_scale: float = 1.0) -> tuple[float, dict[str, np.ndarray]]:
    """Loss at the end of each clip and gradients for every trainable tensor.

    Path: accumulated potentials -> each classifier feedforward -> feature
    reservoir reads -> (frozen-coefficient linear map) -> spikes -> ATan
    surrogate -> every conv pass. Parameter gradients are summed over passes.
    """
    b, k, n = trace.sc_input.shape
    if len(np.atleast_1d(labels)) != b:
        raise ShapeError(f"{len(np.atleast_1d(labels))} labels for a batch of {b}")
    value, dlogits = loss_and_grad(trace.logits, labels)
    dlogits = np.atleast_2d(dlogits) * loss_scale
    j = trace.potentials.shape[1]
    names = cfg.layer_names()
    sc = cfg.sc_index
    grads: dict[str, np.ndarray] = {}

    dpot = np.repeat(dlogits[:, None, :], j, axis=1).reshape(b * j, -1)
    dreads = _backprop_layers(cfg, params, cfg.layers[sc + 1:], names[sc + 1:], trace.post_caches,
                              dpot, grads, True)
    dspikes = pass_backward(trace.rf, dreads.reshape(b, j, n))
    thr = cfg.layers[sc].threshold if cfg.layers[sc].threshold is not None else cfg.sc_threshold
    dx = dspikes * L.atan_surrogate_grad(trace.sc_input, thr, trace.alpha)
    _backprop_layers(cfg, params, cfg.layers[:sc], names[:sc], trace.pre_caches,
                     dx.reshape(b * k, n), grads, False)
    for name in params:
        if trainable(name) and name not in grads:
            grads[name] = np.zeros_like(params[name])
    return value * loss_scale, grads


# -- optimizer and scheduler -----------------------------------------------------


@dataclass
class OptimizerState:
    """Adam with classic (L2, added-to-gradient) weight decay."""

    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")


def adam_step(opt: OptimizerState, params: Params, grads: dict[str, np.ndarray]) -> Params:
    opt.step += 1
    b1, b2 = opt.betas
    c1 = 1.0 - b1 ** opt.step
    c2 = 1.0 - b2 ** opt.step
    out = dict(params)
    for name in sorted(grads):
        p = params[name]
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient {g.shape} vs parameter {p.shape} for {name}")
        if opt.weight_decay:
            g = g + opt.weight_decay * p
        m = opt.m.get(name, np.zeros_like(p))
        v = opt.v.get(name, np.zeros_like(p))
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        opt.m[name], opt.v[name] = m, v
        out[name] = p - opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
    return out


@dataclass
class SchedulerState:
    """Reduce-on-plateau for a metric to minimize, relative threshold."""

    factor: float = 0.9
    patience: int = 2
    threshold: float = 1e-4
    min_lr: float = 1e-6
    best: float = float("inf")
    bad_epochs: int = 0

    def __post_init__(self):
        if not 0 < self.factor < 1:
            raise ConfigError(f"factor must lie in (0, 1), got {self.factor}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")


def scheduler_step(sched: SchedulerState, metric: float, lr: float) -> float:
    if not np.isfinite(metric):
        raise NumericError(f"non-finite metric {metric}")
    if metric < sched.best * (1.0 - sched.threshold):
        sched.best = metric
        sched.bad_epochs = 0
        return lr
    sched.bad_epochs += 1
    if sched.bad_epochs >= sched.patience:
        sched.bad_epochs = 0
        return max(lr * sched.factor, sched.min_lr)
    return lr


# -- training loop ---------------------------------------------------------------


@dataclass(frozen=True)
class Hyperparams:
    lr: float = 1e-3
    weight_decay: float = 0.0
    patience: int = 2
    threshold: float = 1e-4
    min_lr: float = 1e-6
    batch: int = 32
    epochs: int = 150
    seed: int = 0
    surrogate_alpha: float = 2.0
    noise_sigma: float = 0.0

    def __post_init__(self):
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0 or self.min_lr < 0 or self.threshold < 0:
            raise ConfigError("weight_decay, min_lr and threshold must be >= 0")
        if self.batch < 1 or self.epochs < 1 or self.patience < 1:
            raise ConfigError("batch, epochs and patience must be >= 1")
        if self.surrogate_alpha <= 0:
            raise ConfigError("surrogate_alpha must be positive")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown training fields {sorted(unknown)}")
        return cls(**d)


@dataclass
class EncodedDataset:
    """Normalized input-reservoir frames ``(N, K, 2, H, W)`` with labels."""

    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    frame_times: np.ndarray | None = None


def evaluate(cfg: NetworkConfig, params: Params, x: np.ndarray, y: np.ndarray, batch: int = 32,
             frame_times=None) -> float:
    if len(x) == 0:
        return float("nan")
    correct = 0
    for i in range(0, len(x), batch):
        logits, _ = forward_batch(cfg, params, x[i:i + batch], "eval", frame_times=frame_times)
        correct += int((logits.argmax(axis=1) == y[i:i + batch]).sum())
    return correct / len(x)


def train(cfg: NetworkConfig, data: EncodedDataset, hp: Hyperparams, seed: int | None = None,
          params: Params | None = None) -> tuple[Params, list[dict]]:
    """Adam + plateau scheduling on the mean clip loss. Deterministic for a fixed seed."""
    if len(data.train_x) == 0:
        raise ConfigError("training set is empty")
    if data.train_y.min() < 0 or data.train_y.max() >= cfg.num_classes:
        raise ConfigError("training labels out of range")
    seed = hp.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    params = init_params(cfg, seed) if params is None else dict(params)
    opt = OptimizerState(lr=hp.lr, weight_decay=hp.weight_decay)
    sched = SchedulerState(patience=hp.patience, threshold=hp.threshold, min_lr=hp.min_lr)
    history = []
    for epoch in range(1, hp.epochs + 1):
        order = rng.permutation(len(data.train_x))
        total, correct = 0.0, 0
        for i in range(0, len(order), hp.batch):
            idx = order[i:i + hp.batch]
            xb = data.train_x[idx]
            if hp.noise_sigma:
                xb = xb + rng.normal(0.0, hp.noise_sigma, xb.shape)
            logits, trace = forward_batch(cfg, params, xb, "train", frame_times=data.frame_times,
                                          alpha=hp.surrogate_alpha)
            value, grads = backward_clip(cfg, trace, params, data.train_y[idx])
            params = adam_step(opt, params, grads)
            params.update(trace.running_stats)
            total += value * len(idx)
            correct += int((logits.argmax(axis=1) == data.train_y[idx]).sum())
        train_loss = total / len(order)
        row = {
            "epoch": epoch,
            "train_loss": train_loss,
            "train_acc": correct / len(order),
            "test_acc": evaluate(cfg, params, data.test_x, data.test_y, hp.batch, data.frame_times),
            "lr": opt.lr,
        }
        history.append(row)
        log.info("epoch %d loss %.4f train %.3f test %.3f lr %.2e", epoch, row["train_loss"],
                 row["train_acc"], row["test_acc"], row["lr"])
        opt.lr = scheduler_step(sched, train_loss, opt.lr)
    return params, history


def history_csv(history: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=HISTORY_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in history:
        w.writerow({k: (repr(float(row[k])) if k != "epoch" else row[k]) for k in HISTORY_FIELDS})
    return buf.getvalue()


def hyperparams_dict(hp: Hyperparams) -> dict:
    return asdict(hp)
