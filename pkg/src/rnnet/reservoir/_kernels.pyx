# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled event loops for the three reservoir kinds.

Every function walks a time-sorted event list once, interleaving state reads
at ``reads`` (events with t <= read time are applied first). Node state is
kept lazily: ``last[i]`` is the time of node i's latest spike (-1 = never) and
the stored value is the state just after that spike. Return value is the
index of the first out-of-order event, or -1.
"""
from libc.math cimport exp, NAN

import numpy as np
cimport numpy as cnp

cnp.import_array()


def rn_run(const long long[:] t, const long long[:] node, const long long[:] reads,
           double[:] state, long long[:] last, double pc, double tau, double gmax,
           double[:, :] out, double[:] pre_g):
    cdef Py_ssize_t n_ev = t.shape[0], n_rd = reads.shape[0], n = state.shape[0]
    cdef Py_ssize_t i = 0, r, k
    cdef long long ti, li, rt
    cdef double g, step = exp(-1.0 / tau)
    for r in range(n_rd + 1):
        while i < n_ev and (r == n_rd or t[i] <= reads[r]):
            k = node[i]
            ti = t[i]
            li = last[k]
            if ti < li:
                return i
            if ti == li:
                pre_g[i] = NAN
            else:
                g = state[k]
                if li >= 0 and ti - li > 1:
                    g = g * exp(-(ti - li - 1) / tau)
                pre_g[i] = g
                state[k] = pc * (gmax - g) + g * step
                last[k] = ti
            i += 1
        if r < n_rd:
            rt = reads[r]
            for k in range(n):
                if last[k] < 0:
                    out[r, k] = 0.0
                else:
                    out[r, k] = state[k] * exp(-(rt - last[k]) / tau)
    return -1


def ts_run(const long long[:] t, const long long[:] node, const long long[:] reads,
           long long[:] last, double tau, double[:, :] out):
    cdef Py_ssize_t n_ev = t.shape[0], n_rd = reads.shape[0], n = last.shape[0]
    cdef Py_ssize_t i = 0, r, k
    cdef long long rt
    for r in range(n_rd + 1):
        while i < n_ev and (r == n_rd or t[i] <= reads[r]):
            k = node[i]
            if t[i] < last[k]:
                return i
            last[k] = t[i]
            i += 1
        if r < n_rd:
            rt = reads[r]
            for k in range(n):
                if last[k] < 0:
                    out[r, k] = 0.0
                else:
                    out[r, k] = exp(-(rt - last[k]) / tau)
    return -1


def tap_run(const long long[:] t, const long long[:] node, const long long[:] reads,
            double[:] count, long long[:] last, long long window, double[:, :] out):
    cdef Py_ssize_t n_ev = t.shape[0], n_rd = reads.shape[0], n = count.shape[0]
    cdef Py_ssize_t i = 0, r, k
    cdef long long windows
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
            for k in range(n):
                out[r, k] = count[k] / windows if windows > 0 else 0.0
    return -1


# -- dense helpers for the network layers (NCHW, float64, pre-padded input) --

def maxpool_fwd(const double[:, :, :, ::1] x, int k, int stride,
                double[:, :, :, ::1] out, int[:, :, :, ::1] idx):
    cdef Py_ssize_t n = out.shape[0], c = out.shape[1], ho = out.shape[2], wo = out.shape[3]
    cdef Py_ssize_t a, b, oh, ow, i, j
    cdef double best, v
    cdef int arg
    for a in range(n):
        for b in range(c):
            for oh in range(ho):
                for ow in range(wo):
                    best = x[a, b, oh * stride, ow * stride]
                    arg = 0
                    for i in range(k):
                        for j in range(k):
                            v = x[a, b, oh * stride + i, ow * stride + j]
                            if v > best:
                                best = v
                                arg = i * k + j
                    out[a, b, oh, ow] = best
                    idx[a, b, oh, ow] = arg


def maxpool_bwd(const double[:, :, :, ::1] dout, const int[:, :, :, ::1] idx, int k, int stride,
                double[:, :, :, ::1] dx):
    cdef Py_ssize_t n = dout.shape[0], c = dout.shape[1], ho = dout.shape[2], wo = dout.shape[3]
    cdef Py_ssize_t a, b, oh, ow
    cdef int arg
    for a in range(n):
        for b in range(c):
            for oh in range(ho):
                for ow in range(wo):
                    arg = idx[a, b, oh, ow]
                    dx[a, b, oh * stride + arg // k, ow * stride + arg % k] += dout[a, b, oh, ow]


def col2im(const double[:, :, :, :, :, ::1] dcols, int stride, double[:, :, :, ::1] dx):
    """Scatter-add window gradients ``(N, Ho, Wo, C, k, k)`` onto ``dx`` ``(N, C, Hp, Wp)``."""
    cdef Py_ssize_t n = dcols.shape[0], ho = dcols.shape[1], wo = dcols.shape[2]
    cdef Py_ssize_t c = dcols.shape[3], k = dcols.shape[4]
    cdef Py_ssize_t a, b, oh, ow, i, j
    for a in range(n):
        for oh in range(ho):
            for ow in range(wo):
                for b in range(c):
                    for i in range(k):
                        for j in range(k):
                            dx[a, b, oh * stride + i, ow * stride + j] += dcols[a, oh, ow, b, i, j]


def im2col(const double[:, :, :, ::1] xp, int k, int stride, double[:, :, :, :, :, ::1] cols):
    """Gather windows of ``xp`` into ``cols`` ``(N, Ho, Wo, C, k, k)``."""
    cdef Py_ssize_t n = cols.shape[0], ho = cols.shape[1], wo = cols.shape[2], c = cols.shape[3]
    cdef Py_ssize_t a, b, oh, ow, i, j
    for a in range(n):
        for oh in range(ho):
            for ow in range(wo):
                for b in range(c):
                    for i in range(k):
                        for j in range(k):
                            cols[a, oh, ow, b, i, j] = xp[a, b, oh * stride + i, ow * stride + j]
