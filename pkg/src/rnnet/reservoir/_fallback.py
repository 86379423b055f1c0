"""Pure-Python event loops; same contract as the compiled ``_kernels`` module."""

import math

import numpy as np


def rn_run(t, node, reads, state, last, pc, tau, gmax, out, pre_g):
    t = t.tolist()
    node = node.tolist()
    reads = reads.tolist()
    n_ev, n_rd = len(t), len(reads)
    step = math.exp(-1.0 / tau)
    exp = math.exp
    i = 0
    for r in range(n_rd + 1):
        while i < n_ev and (r == n_rd or t[i] <= reads[r]):
            k, ti = node[i], t[i]
            li = int(last[k])
            if ti < li:
                return i
            if ti == li:
                pre_g[i] = math.nan
            else:
                g = float(state[k])
                if li >= 0 and ti - li > 1:
                    g *= exp(-(ti - li - 1) / tau)
                pre_g[i] = g
                state[k] = pc * (gmax - g) + g * step
                last[k] = ti
            i += 1
        if r < n_rd:
            out[r] = np.where(last < 0, 0.0, state * np.exp(-(reads[r] - last) / tau))
    return -1


def ts_run(t, node, reads, last, tau, out):
    t = t.tolist()
    node = node.tolist()
    reads = reads.tolist()
    n_ev, n_rd = len(t), len(reads)
    i = 0
    for r in range(n_rd + 1):
        while i < n_ev and (r == n_rd or t[i] <= reads[r]):
            k = node[i]
            if t[i] < last[k]:
                return i
            last[k] = t[i]
            i += 1
        if r < n_rd:
            out[r] = np.where(last < 0, 0.0, np.exp(-(reads[r] - last) / tau))
    return -1


def tap_run(t, node, reads, count, last, window, out):
    t = t.tolist()
    node = node.tolist()
    reads = reads.tolist()
    n_ev, n_rd = len(t), len(reads)
    i = 0
    for r in range(n_rd + 1):
        while i < n_ev and (r == n_rd or t[i] <= reads[r]):
            k = node[i]
            if t[i] < last[k]:
                return i
            if t[i] != last[k]:
                count[k] += 1.0
                last[k] = t[i]
            i += 1
        if r < n_rd:
            windows = reads[r] // window
            out[r] = count / windows if windows > 0 else 0.0
    return -1


# -- dense helpers for the network layers; vectorized per window offset --

def _view(a, i, j, stride, ho, wo):
    return a[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]


def maxpool_fwd(x, k, stride, out, idx):
    ho, wo = out.shape[2], out.shape[3]
    out[...] = _view(x, 0, 0, stride, ho, wo)
    idx[...] = 0
    for i in range(k):
        for j in range(k):
            v = _view(x, i, j, stride, ho, wo)
            better = v > out
            np.copyto(out, v, where=better)
            np.copyto(idx, i * k + j, where=better)


def maxpool_bwd(dout, idx, k, stride, dx):
    ho, wo = dout.shape[2], dout.shape[3]
    for i in range(k):
        for j in range(k):
            _view(dx, i, j, stride, ho, wo)[...] += np.where(idx == i * k + j, dout, 0.0)


def col2im(dcols, stride, dx):
    ho, wo, k = dcols.shape[1], dcols.shape[2], dcols.shape[4]
    for i in range(k):
        for j in range(k):
            _view(dx, i, j, stride, ho, wo)[...] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)


def im2col(xp, k, stride, cols):
    ho, wo = cols.shape[1], cols.shape[2]
    for i in range(k):
        for j in range(k):
            cols[:, :, :, :, i, j] = _view(xp, i, j, stride, ho, wo).transpose(0, 2, 3, 1)
