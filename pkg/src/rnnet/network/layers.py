"""Forward/backward numpy kernels for the DNN blocks.

Each ``*_forward`` returns ``(out, cache)``; the matching ``*_backward``
takes the upstream gradient and that cache. Tensors are NCHW float64.
"""

from __future__ import annotations

import numpy as np

from rnnet.errors import ShapeError
from rnnet.reservoir.backend import kernels

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def out_size(n: int, k: int, pad: int, stride: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _pad(x: np.ndarray, pad: int, value: float = 0.0) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=value)


# -- convolution -------------------------------------------------------------


def conv2d_forward(x, w, b, pad: int = 0, stride: int = 1):
    n, c, h, wd = x.shape
    o, ci, k, k2 = w.shape
    if ci != c or k != k2:
        raise ShapeError(f"conv weight {w.shape} incompatible with input {x.shape}")
    ho, wo = out_size(h, k, pad, stride), out_size(wd, k, pad, stride)
    if ho < 1 or wo < 1:
        raise ShapeError(f"kernel {k} does not fit input {h}x{wd} with pad {pad}")
    xp = np.ascontiguousarray(_pad(x, pad), dtype=np.float64)
    cols = np.empty((n, ho, wo, c, k, k))
    kernels.im2col(xp, k, stride, cols)
    cols = cols.reshape(n * ho * wo, c * k * k)
    out = cols @ w.reshape(o, -1).T
    if b is not None:
        out += b
    out = out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), (cols, xp.shape, w, pad, stride, ho, wo)


def conv2d_backward(dout, cache, need_dx: bool = True):
    cols, xp_shape, w, pad, stride, ho, wo = cache
    n = xp_shape[0]
    o, c, k, _ = w.shape
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, o)
    dw = (d2.T @ cols).reshape(w.shape)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (d2 @ w.reshape(o, -1)).reshape(n, ho, wo, c, k, k)
    dxp = np.zeros(xp_shape)
    kernels.col2im(dcols, stride, dxp)
    if pad:
        dxp = dxp[:, :, pad:-pad, pad:-pad]
    return dxp, dw, db


# -- max pooling -------------------------------------------------------------


def maxpool_forward(x, k: int, pad: int = 0, stride: int = 1):
    """Max over ``k x k`` windows; ties go to the first maximum in row-major window order."""
    n, c, h, wd = x.shape
    ho, wo = out_size(h, k, pad, stride), out_size(wd, k, pad, stride)
    if ho < 1 or wo < 1:
        raise ShapeError(f"pool window {k} does not fit input {h}x{wd}")
    xp = np.ascontiguousarray(_pad(x, pad, -np.inf), dtype=np.float64)
    out = np.empty((n, c, ho, wo))
    idx = np.empty((n, c, ho, wo), dtype=np.intc)
    kernels.maxpool_fwd(xp, k, stride, out, idx)
    return out, (idx, xp.shape, k, pad, stride)


def maxpool_backward(dout, cache, need_dx: bool = True):
    if not need_dx:
        return None
    idx, xp_shape, k, pad, stride = cache
    dxp = np.zeros(xp_shape)
    kernels.maxpool_bwd(np.ascontiguousarray(dout, dtype=np.float64), idx, k, stride, dxp)
    if pad:
        dxp = dxp[:, :, pad:-pad, pad:-pad]
    return dxp


# -- batch normalization -----------------------------------------------------


def _bn_axes(x):
    return (0, 2, 3) if x.ndim == 4 else (0,)


def _bn_view(v, x):
    return v.reshape(1, -1, 1, 1) if x.ndim == 4 else v


def batchnorm_forward(x, gamma, beta, running_mean, running_var, mode: str = "train",
                      momentum: float = BN_MOMENTUM, eps: float = BN_EPS):
    """Per-channel normalization over batch (and spatial) axes.

    Returns ``(out, cache, (new_running_mean, new_running_var))``; the
    inputs are not modified. Running variance uses the unbiased estimate.
    """
    if gamma.shape[0] != x.shape[1]:
        raise ShapeError(f"batchnorm has {gamma.shape[0]} channels, input has {x.shape[1]}")
    axes = _bn_axes(x)
    if mode == "train":
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        m = x.size // x.shape[1]
        unbiased = var * m / (m - 1) if m > 1 else var
        new_stats = (
            (1 - momentum) * running_mean + momentum * mean,
            (1 - momentum) * running_var + momentum * unbiased,
        )
    else:
        mean, var = running_mean, running_var
        new_stats = (running_mean, running_var)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - _bn_view(mean, x)) * _bn_view(inv, x)
    out = xhat * _bn_view(gamma, x) + _bn_view(beta, x)
    return out, (xhat, inv, gamma, mode), new_stats


def batchnorm_backward(dout, cache):
    xhat, inv, gamma, mode = cache
    axes = _bn_axes(dout)
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dxhat = dout * _bn_view(gamma, dout)
    if mode == "train":
        m = dout.size // dout.shape[1]
        dx = (_bn_view(inv, dout) / m) * (
            m * dxhat
            - _bn_view(dxhat.sum(axis=axes), dout)
            - xhat * _bn_view((dxhat * xhat).sum(axis=axes), dout)
        )
    else:
        dx = dxhat * _bn_view(inv, dout)
    return dx, dgamma, dbeta


# -- pointwise, fc -----------------------------------------------------------


def relu_forward(x):
    return np.maximum(x, 0.0), x > 0


def relu_backward(dout, mask):
    return dout * mask


def fc_forward(x, w, b):
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"fc weight {w.shape} incompatible with input {x.shape}")
    out = x @ w.T
    if b is not None:
        out = out + b
    return out, x


def fc_backward(dout, x, w, need_dx: bool = True):
    dw = dout.T @ x
    db = dout.sum(axis=0)
    return (dout @ w if need_dx else None), dw, db


# -- spike conversion ----------------------------------------------------------


def spike_convert(x, threshold: float):
    """Binary spikes where ``x`` strictly exceeds ``threshold``."""
    return (x > threshold).astype(np.float64)


def atan_primitive(x, threshold: float, alpha: float = 2.0):
    """Smooth step whose derivative is the ATan surrogate."""
    return np.arctan(0.5 * np.pi * alpha * (x - threshold)) / np.pi + 0.5


def atan_surrogate_grad(x, threshold: float, alpha: float = 2.0):
    """d/dx of :func:`atan_primitive`: alpha/2 / (1 + (pi/2 * alpha * (x - threshold))**2)."""
    z = 0.5 * np.pi * alpha * (x - threshold)
    return 0.5 * alpha / (1.0 + z * z)
