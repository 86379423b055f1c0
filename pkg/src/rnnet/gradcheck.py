"""Central-difference checks for every differentiable op in the network.

Each check draws a small random instance, contracts the op's output with a
random cotangent to get a scalar, and compares the analytic gradient with
``(f(x + eps) - f(x - eps)) / (2 eps)`` element by element. The reported
error is per tensor: ``|a - n| / max(|a|, |n|)`` in the Euclidean norm.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from rnnet.network import layers as L
from rnnet.network.config import LayerSpec, NetworkConfig, ReservoirSpec
from rnnet.network.model import forward_batch, init_params
from rnnet.reservoir.passwise import pass_backward, pass_encode

EPS = 1e-5
TOLERANCE = 1e-3


@dataclass(frozen=True)
class CheckResult:
    op: str
    instance: int
    tensor: str
    rel_error: float

    @property
    def ok(self) -> bool:
        return self.rel_error <= TOLERANCE


def rel_error(a: np.ndarray, n: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(n))
    return float(np.linalg.norm(a - n) / denom) if denom > 0 else 0.0


def numeric_grad(f: Callable[[], float], x: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Central differences of ``f`` w.r.t. ``x``, perturbing ``x`` in place."""
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f()
        flat[i] = orig - eps
        lo = f()
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * eps)
    return g


def _distinct(rng, shape):
    # well-separated values keep max-pool and relu away from their kinks
    n = int(np.prod(shape))
    step = 4.0 / n
    return ((rng.permutation(n) - n / 2) * step + step / 3).reshape(shape)


def check_conv(rng, eps=EPS):
    c, o, k = rng.integers(1, 4), rng.integers(1, 4), int(rng.integers(1, 4))
    pad, stride = int(rng.integers(0, 2)), int(rng.integers(1, 3))
    h = int(rng.integers(k, k + 4))
    x = rng.normal(size=(2, c, h, h))
    w = rng.normal(size=(o, c, k, k))
    b = rng.normal(size=o)
    out, cache = L.conv2d_forward(x, w, b, pad, stride)
    g = rng.normal(size=out.shape)
    dx, dw, db = L.conv2d_backward(g, cache)
    f = lambda: float((L.conv2d_forward(x, w, b, pad, stride)[0] * g).sum())
    return {"x": (dx, numeric_grad(f, x, eps)), "weight": (dw, numeric_grad(f, w, eps)),
            "bias": (db, numeric_grad(f, b, eps))}


def check_maxpool(rng, eps=EPS):
    k = int(rng.integers(2, 4))
    stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, 2))
    x = _distinct(rng, (2, 2, k + 3, k + 4))
    out, cache = L.maxpool_forward(x, k, pad, stride)
    g = rng.normal(size=out.shape)
    dx = L.maxpool_backward(g, cache)
    f = lambda: float((L.maxpool_forward(x, k, pad, stride)[0] * g).sum())
    return {"x": (dx, numeric_grad(f, x, eps))}


def check_batchnorm(rng, eps=EPS):
    spatial = bool(rng.integers(2))
    shape = (4, 3, 3, 3) if spatial else (6, 3)
    x = rng.normal(size=shape) * 2 + 1
    gamma, beta = rng.normal(size=3), rng.normal(size=3)
    rm, rv = np.zeros(3), np.ones(3)
    out, cache, _ = L.batchnorm_forward(x, gamma, beta, rm, rv, "train")
    g = rng.normal(size=out.shape)
    dx, dgamma, dbeta = L.batchnorm_backward(g, cache)
    f = lambda: float((L.batchnorm_forward(x, gamma, beta, rm, rv, "train")[0] * g).sum())
    return {"x": (dx, numeric_grad(f, x, eps)), "gamma": (dgamma, numeric_grad(f, gamma, eps)),
            "beta": (dbeta, numeric_grad(f, beta, eps))}


def check_fc(rng, eps=EPS):
    n, i, o = rng.integers(1, 5), rng.integers(1, 6), rng.integers(1, 5)
    x, w, b = rng.normal(size=(n, i)), rng.normal(size=(o, i)), rng.normal(size=o)
    out, cache = L.fc_forward(x, w, b)
    g = rng.normal(size=out.shape)
    dx, dw, db = L.fc_backward(g, cache, w)
    f = lambda: float((L.fc_forward(x, w, b)[0] * g).sum())
    return {"x": (dx, numeric_grad(f, x, eps)), "weight": (dw, numeric_grad(f, w, eps)),
            "bias": (db, numeric_grad(f, b, eps))}


def check_relu(rng, eps=EPS):
    x = _distinct(rng, (3, 4))
    out, mask = L.relu_forward(x)
    g = rng.normal(size=out.shape)
    f = lambda: float((L.relu_forward(x)[0] * g).sum())
    return {"x": (L.relu_backward(g, mask), numeric_grad(f, x, eps))}


def check_loss(rng, eps=EPS):
    from rnnet.training import loss_and_grad

    b, c = int(rng.integers(1, 4)), int(rng.integers(2, 6))
    z = rng.normal(size=(b, c)) * 3
    y = rng.integers(0, c, b)
    _, g = loss_and_grad(z, y)
    return {"logits": (g, numeric_grad(lambda: loss_and_grad(z, y)[0], z, eps))}


def _check_reservoir(rng, kind, eps):
    b, k, n = 2, int(rng.integers(3, 7)), 3
    st = np.cumsum(rng.integers(1, 4, k)) * 10
    rt = np.unique(rng.integers(st[0], st[-1] + 20, 3))
    s = rng.uniform(0.05, 0.95, (b, k, n))
    enc = pass_encode(s, st, rt, kind, p_c=0.4, tau=25.0, window=10)
    coeff = enc.coeff  # frozen potentiation coefficients for RN
    g = rng.normal(size=enc.reads.shape)
    analytic = pass_backward(enc, g)
    f = lambda: float((pass_encode(s, st, rt, kind, p_c=0.4, tau=25.0, window=10,
                                   coeff=coeff if kind == "RN" else None).reads * g).sum())
    return {"spikes": (analytic, numeric_grad(f, s, eps))}


def check_rf_rn(rng, eps=EPS):
    return _check_reservoir(rng, "RN", eps)


def check_rf_ts(rng, eps=EPS):
    return _check_reservoir(rng, "TS", eps)


def check_rf_tap(rng, eps=EPS):
    return _check_reservoir(rng, "TAP", eps)


def tiny_config(r_f: str = "RN") -> NetworkConfig:
    """A 6x6 network that exercises every layer kind; used for end-to-end checks."""
    layers = (
        LayerSpec("conv", kernel=3, out_channels=3, pad=1),
        LayerSpec("maxpool", kernel=2, stride=2),
        LayerSpec("batchnorm"),
        LayerSpec("relu"),
        LayerSpec("conv", kernel=3, out_channels=4),
        LayerSpec("batchnorm"),
        LayerSpec("relu"),
        LayerSpec("flatten"),
        LayerSpec("spike_convert", threshold=0.3),
        LayerSpec("fc", out_channels=5),
        LayerSpec("batchnorm"),
        LayerSpec("relu"),
        LayerSpec("fc", out_channels=3),
    )
    return NetworkConfig(
        name="tiny", input_geometry=(6, 6), layers=layers,
        r_in=ReservoirSpec(interval_us=10),
        r_f=ReservoirSpec(kind=r_f, p_c=0.3, tau_us=40.0, interval_us=20),
        num_classes=3, clip_us=60,
    ).validate()


def check_network(rng, eps=EPS):
    """Whole clip: smooth spike conversion, frozen R_f coefficients, train-mode batchnorm."""
    from rnnet.training import backward_clip, loss_and_grad

    cfg = tiny_config()
    params = init_params(cfg, int(rng.integers(2**31)))
    x = rng.uniform(0, 1, (2, cfg.num_passes) + cfg.input_shape)
    y = rng.integers(0, cfg.num_classes, 2)
    _, trace = forward_batch(cfg, params, x, "train", sc_mode="smooth")
    coeff = trace.rf.coeff
    _, grads = backward_clip(cfg, trace, params, y)

    def f():
        logits, _ = forward_batch(cfg, params, x, "train", sc_mode="smooth", rf_coeff=coeff)
        return loss_and_grad(logits, y)[0]

    # conv biases feed batchnorm directly, so their exact gradient is zero; skip them
    names = ["conv1.weight", "conv2.weight", "batchnorm1.gamma", "fc1.weight", "batchnorm3.beta", "fc2.bias"]
    return {name: (grads[name], numeric_grad(f, params[name], eps)) for name in names}


CHECKS: dict[str, Callable] = {
    "conv": check_conv,
    "maxpool": check_maxpool,
    "batchnorm": check_batchnorm,
    "fc": check_fc,
    "relu": check_relu,
    "loss": check_loss,
    "rf_rn": check_rf_rn,
    "rf_ts": check_rf_ts,
    "rf_tap": check_rf_tap,
    "network": check_network,
}


def surrogate_error(rng, n: int = 1000, alpha: float = 2.0, threshold: float = 0.3) -> float:
    """Largest gap between the surrogate gradient and the closed-form ATan expression."""
    x = rng.uniform(-3, 3, n)
    z = np.pi / 2 * alpha * (x - threshold)
    expected = alpha / 2 / (1 + z ** 2)
    return float(np.max(np.abs(L.atan_surrogate_grad(x, threshold, alpha) - expected)))


def run(instances: int = 10, seed: int = 0, ops=None, eps: float = EPS) -> Iterator[CheckResult]:
    rng = np.random.default_rng(seed)
    for op in ops or CHECKS:
        for i in range(instances):
            for tensor, (a, n) in CHECKS[op](rng, eps).items():
                yield CheckResult(op, i, tensor, rel_error(a, n))
