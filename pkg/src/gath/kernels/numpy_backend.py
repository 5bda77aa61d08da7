"""Pure-numpy implementations of the hot numeric kernels.

Reference backend: always available, used when GATH_KERNELS=numpy or when
numba is not importable. Segment reductions use ufunc.reduceat with an
explicit fix-up for empty segments (reduceat returns x[i] for i == j
instead of the neutral element).
"""

import numpy as np

NAME = "numpy"


def _reduceat(ufunc, x, offsets, axis=0):
    starts = offsets[:-1]
    keep = offsets[1:] > starts
    shape = list(x.shape)
    shape[axis] = len(starts)
    out = np.zeros(shape, dtype=x.dtype)
    if not keep.any():
        return out
    # Run reduceat over non-empty segments only. Dropping an empty segment
    # never changes a neighbor's range: its start equals both the previous
    # segment's end and the next segment's start, and offsets[-1] == len(x)
    # covers the final kept segment. Clamping out-of-range starts instead
    # would silently shorten the segment before a trailing empty one.
    red = ufunc.reduceat(x, starts[keep], axis=axis)
    sel = [slice(None)] * x.ndim
    sel[axis] = keep
    out[tuple(sel)] = red
    return out


def segment_sum(x, offsets):
    """Sum of x within each [offsets[i], offsets[i+1]) segment."""
    return _reduceat(np.add, x, offsets)


def segment_ids(offsets):
    """Per-element segment index implied by the offsets partition."""
    lengths = np.diff(offsets)
    return np.repeat(np.arange(len(lengths), dtype=np.int64), lengths)


def segment_softmax_fwd(x, offsets):
    """Softmax within each segment, max-subtracted for stability."""
    if len(x) == 0:
        return np.zeros(0, dtype=np.float64)
    seg = segment_ids(offsets)
    mx = _reduceat(np.maximum, x, offsets)
    e = np.exp(x - mx[seg])
    denom = segment_sum(e, offsets)
    return e / denom[seg]


def segment_softmax_vjp(y, g, offsets):
    """VJP of segment softmax: y * (g - <g, y>_segment)."""
    if len(y) == 0:
        return np.zeros(0, dtype=np.float64)
    seg = segment_ids(offsets)
    dot = segment_sum(y * g, offsets)
    return y * (g - dot[seg])


def segment_sum_rows(x, offsets):
    """Row-wise segment sum: [E, d] edges -> [S, d] per-segment totals."""
    return _reduceat(np.add, x, offsets, axis=0)


def scatter_add_rows(ids, rows, num_rows):
    """Accumulate rows into a [num_rows, d] table at the given row ids."""
    out = np.zeros((num_rows, rows.shape[1]), dtype=np.float64)
    np.add.at(out, ids, rows)
    return out


def _windows(x, kh, kw):
    # strided view [B, C, m, n, kh, kw] of all valid kh x kw patches
    b, c, h, w = x.shape
    sb, sc, sh, sw = x.strides
    shape = (b, c, h - kh + 1, w - kw + 1, kh, kw)
    return np.lib.stride_tricks.as_strided(
        x, shape=shape, strides=(sb, sc, sh, sw, sh, sw), writeable=False
    )


def conv2d_fwd(x, k):
    """Valid cross-correlation: x [B,C,H,W], k [O,C,kh,kw] -> [B,O,m,n]."""
    kh, kw = k.shape[2], k.shape[3]
    return np.einsum("bcmnuv,ocuv->bomn", _windows(x, kh, kw), k, optimize=True)


def conv2d_grad_kernels(x, gy):
    """Gradient of conv2d_fwd w.r.t. the kernels."""
    m, n = gy.shape[2], gy.shape[3]
    h, w = x.shape[2], x.shape[3]
    kh, kw = h - m + 1, w - n + 1
    return np.einsum("bcmnuv,bomn->ocuv", _windows(x, kh, kw), gy, optimize=True)


def conv2d_grad_input(k, gy):
    """Gradient of conv2d_fwd w.r.t. the input (full correlation)."""
    kh, kw = k.shape[2], k.shape[3]
    pad = ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1))
    gyp = np.pad(gy, pad)
    kf = k[:, :, ::-1, ::-1]
    return np.einsum("bohwuv,ocuv->bchw", _windows(gyp, kh, kw), kf, optimize=True)
