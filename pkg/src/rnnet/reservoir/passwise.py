"""Batched reservoir encoding of per-pass spike tensors (the feature reservoir).

Spikes arrive only at pass instants ``spike_times[k]``, one potential spike
per node per pass, so every kind reduces to a small recurrence over passes
vectorized across (batch, node). States are normalized (RN divided by
``g_max``).

Read-outs are differentiable in the spike tensor:

* RN: ``read[j] = sum_k decay[j, k] * coeff[k] * s[k]`` with the potentiation
  coefficient ``coeff = p_c * (1 - G_before)`` frozen at its forward value.
* TAP: the same form with ``coeff = 1`` and ``decay`` holding ``1/windows``.
* TS: the multilinear extension ``sum_k s[k] * prod_{m>k}(1 - s[m]) * decay[j, k]``,
  which equals the time surface for binary spikes; its Jacobian is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from rnnet.errors import ConfigError, ShapeError


@dataclass
class PassEncoding:
    kind: str
    reads: np.ndarray  # (B, J, N)
    decay: np.ndarray  # (J, K)
    coeff: np.ndarray | None  # (B, K, N) for RN / TAP
    jacobian: np.ndarray | None  # (B, J, K, N) for TS
    pre_spike: np.ndarray | None  # (B, K, N) normalized pre-pulse state, RN only


def pass_encode(spikes, spike_times, read_times, kind: str, *, p_c: float = 0.5,
                tau: float = 1.0, window: int = 1, coeff=None) -> PassEncoding:
    s = np.asarray(spikes, dtype=float)
    if s.ndim != 3:
        raise ShapeError(f"spikes must be (batch, passes, nodes), got {s.shape}")
    b, k_passes, n = s.shape
    st = np.asarray(spike_times, dtype=np.int64)
    rt = np.asarray(read_times, dtype=np.int64)
    if len(st) != k_passes:
        raise ShapeError(f"{k_passes} passes but {len(st)} spike times")
    if np.any(np.diff(st) <= 0) or np.any(np.diff(rt) < 0):
        raise ConfigError("pass and read times must be increasing")
    live = st[None, :] <= rt[:, None]  # (J, K)
    lag = (rt[:, None] - st[None, :]).astype(float)

    if kind == "RN":
        decay = np.where(live, np.exp(-np.where(live, lag, 0.0) / tau), 0.0)
        pre = None
        if coeff is None:
            coeff = np.empty_like(s)
            pre = np.empty_like(s)
            g = np.zeros((b, n))
            prev_t = 0
            step = np.exp(-1.0 / tau)
            for k in range(k_passes):
                hat = g * np.exp(-max(int(st[k]) - 1 - prev_t, 0) / tau) if k else g
                pre[:, k] = hat
                coeff[:, k] = p_c * (1.0 - hat)
                g = hat * step + s[:, k] * coeff[:, k]
                prev_t = int(st[k])
        reads = np.einsum("jk,bkn->bjn", decay, coeff * s)
        return PassEncoding("RN", reads, decay, coeff, None, pre)

    if kind == "TAP":
        windows = rt // window
        scale = np.divide(1.0, windows, out=np.zeros(len(rt)), where=windows > 0)
        decay = live * scale[:, None]
        coeff = np.ones_like(s)
        reads = np.einsum("jk,bkn->bjn", decay, s)
        return PassEncoding("TAP", reads, decay, coeff, None, None)

    if kind == "TS":
        decay = np.where(live, np.exp(-np.where(live, lag, 0.0) / tau), 0.0)
        j_reads = len(rt)
        reads = np.zeros((b, j_reads, n))
        jac = np.zeros((b, j_reads, k_passes, n))
        for j in range(j_reads):
            kj = int(live[j].sum())
            # carry[k] = surface value built from passes < k
            carry = np.zeros((b, kj + 1, n))
            for k in range(kj):
                carry[:, k + 1] = carry[:, k] * (1.0 - s[:, k]) + s[:, k] * decay[j, k]
            survive = np.ones((b, kj + 1, n))  # survive[k] = prod_{m >= k} (1 - s[m])
            for k in range(kj - 1, -1, -1):
                survive[:, k] = survive[:, k + 1] * (1.0 - s[:, k])
            reads[:, j] = carry[:, kj]
            jac[:, j, :kj] = (decay[j, :kj][None, :, None] - carry[:, :kj]) * survive[:, 1:]
        return PassEncoding("TS", reads, decay, None, jac, None)

    raise ConfigError(f"unknown reservoir kind {kind!r}")


def pass_backward(enc: PassEncoding, dreads: np.ndarray) -> np.ndarray:
    """Gradient of a scalar loss w.r.t. the spike tensor, given d loss / d reads."""
    if enc.kind == "TS":
        return np.einsum("bjkn,bjn->bkn", enc.jacobian, dreads)
    return enc.coeff * np.einsum("jk,bjn->bkn", enc.decay, dreads)
