"""numba @njit implementations of the hot kernels.

Same contracts as numpy_backend; plain sequential loops so the summation
order is fixed and results are reproducible run to run. cache=True keeps
recompilation off the critical path after the first use on a machine.
"""

import numpy as np
from numba import njit

NAME = "numba"

_JIT = {"cache": True, "nogil": True}


@njit(**_JIT)
def segment_sum(x, offsets):
    out = np.zeros(len(offsets) - 1, dtype=np.float64)
    for s in range(len(offsets) - 1):
        acc = 0.0
        for e in range(offsets[s], offsets[s + 1]):
            acc += x[e]
        out[s] = acc
    return out


@njit(**_JIT)
def segment_ids(offsets):
    n = offsets[len(offsets) - 1]
    out = np.empty(n, dtype=np.int64)
    for s in range(len(offsets) - 1):
        for e in range(offsets[s], offsets[s + 1]):
            out[e] = s
    return out


@njit(**_JIT)
def segment_softmax_fwd(x, offsets):
    out = np.zeros(len(x), dtype=np.float64)
    for s in range(len(offsets) - 1):
        lo, hi = offsets[s], offsets[s + 1]
        if hi == lo:
            continue
        mx = x[lo]
        for e in range(lo + 1, hi):
            if x[e] > mx:
                mx = x[e]
        denom = 0.0
        for e in range(lo, hi):
            out[e] = np.exp(x[e] - mx)
            denom += out[e]
        for e in range(lo, hi):
            out[e] /= denom
    return out


@njit(**_JIT)
def segment_softmax_vjp(y, g, offsets):
    out = np.zeros(len(y), dtype=np.float64)
    for s in range(len(offsets) - 1):
        lo, hi = offsets[s], offsets[s + 1]
        dot = 0.0
        for e in range(lo, hi):
            dot += y[e] * g[e]
        for e in range(lo, hi):
            out[e] = y[e] * (g[e] - dot)
    return out


@njit(**_JIT)
def segment_sum_rows(x, offsets):
    d = x.shape[1]
    out = np.zeros((len(offsets) - 1, d), dtype=np.float64)
    for s in range(len(offsets) - 1):
        for e in range(offsets[s], offsets[s + 1]):
            for j in range(d):
                out[s, j] += x[e, j]
    return out


@njit(**_JIT)
def scatter_add_rows(ids, rows, num_rows):
    d = rows.shape[1]
    out = np.zeros((num_rows, d), dtype=np.float64)
    for e in range(len(ids)):
        i = ids[e]
        for j in range(d):
            out[i, j] += rows[e, j]
    return out


@njit(**_JIT)
def conv2d_fwd(x, k):
    b, c, h, w = x.shape
    o, _, kh, kw = k.shape
    m, n = h - kh + 1, w - kw + 1
    out = np.zeros((b, o, m, n), dtype=np.float64)
    for bi in range(b):
        for oi in range(o):
            for ci in range(c):
                for i in range(m):
                    for j in range(n):
                        acc = 0.0
                        for u in range(kh):
                            for v in range(kw):
                                acc += x[bi, ci, i + u, j + v] * k[oi, ci, u, v]
                        out[bi, oi, i, j] += acc
    return out


@njit(**_JIT)
def conv2d_grad_kernels(x, gy):
    b, c, h, w = x.shape
    _, o, m, n = gy.shape
    kh, kw = h - m + 1, w - n + 1
    out = np.zeros((o, c, kh, kw), dtype=np.float64)
    for bi in range(b):
        for oi in range(o):
            for ci in range(c):
                for u in range(kh):
                    for v in range(kw):
                        acc = 0.0
                        for i in range(m):
                            for j in range(n):
                                acc += x[bi, ci, i + u, j + v] * gy[bi, oi, i, j]
                        out[oi, ci, u, v] += acc
    return out


@njit(**_JIT)
def conv2d_grad_input(k, gy):
    o, c, kh, kw = k.shape
    b, _, m, n = gy.shape
    h, w = m + kh - 1, n + kw - 1
    out = np.zeros((b, c, h, w), dtype=np.float64)
    for bi in range(b):
        for oi in range(o):
            for ci in range(c):
                for i in range(m):
                    for j in range(n):
                        g = gy[bi, oi, i, j]
                        for u in range(kh):
                            for v in range(kw):
                                out[bi, ci, i + u, j + v] += g * k[oi, ci, u, v]
    return out
