"""Differentiable primitives: forward semantics plus exact VJPs.

Everything is float64. Integer index arrays (ids, offsets) are plain numpy
arrays, never tensors. Hot segment/conv paths dispatch to gath.kernels.
"""

import os

import numpy as np

from .. import kernels
from ..errors import ShapeError
from .tensor import Tensor, record

# Test hook: names listed here get their VJP scaled by 1.5, which a
# finite-difference check must catch. Set GATH_CORRUPT_VJP=op[,op...]
_CORRUPT_VJP = frozenset(
    s for s in os.environ.get("GATH_CORRUPT_VJP", "").split(",") if s
)


def _maybe_corrupt(name, grads):
    if name in _CORRUPT_VJP:
        return tuple(None if g is None else g * 1.5 for g in grads)
    return grads


def _unbroadcast(g, shape):
    """Sum g down to shape, undoing numpy broadcasting."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def matmul(a, b):
    """2-D matrix product; dA = dC @ B^T, dB = A^T @ dC."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul {a.shape} x {b.shape}")
    out = Tensor(a.data @ b.data, a.requires_grad or b.requires_grad)

    def vjp(g):
        return _maybe_corrupt("matmul", (g @ b.data.T, a.data.T @ g))

    return record(out, (a, b), vjp)


def transpose(a):
    if a.data.ndim != 2:
        raise ShapeError(f"transpose on rank {a.data.ndim}")
    out = Tensor(a.data.T.copy(), a.requires_grad)
    return record(out, (a,), lambda g: _maybe_corrupt("transpose", (g.T,)))


def hadamard(a, b):
    """Elementwise product with numpy broadcasting on either side."""
    try:
        val = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"hadamard {a.shape} * {b.shape}") from exc
    out = Tensor(val, a.requires_grad or b.requires_grad)

    def vjp(g):
        return _maybe_corrupt(
            "hadamard",
            (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        )

    return record(out, (a, b), vjp)


def add(a, b):
    try:
        val = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add {a.shape} + {b.shape}") from exc
    out = Tensor(val, a.requires_grad or b.requires_grad)

    def vjp(g):
        return _maybe_corrupt(
            "add", (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))
        )

    return record(out, (a, b), vjp)


def scale(a, c):
    c = float(c)
    out = Tensor(a.data * c, a.requires_grad)
    return record(out, (a,), lambda g: _maybe_corrupt("scale", (g * c,)))


def reshape(a, shape):
    out = Tensor(a.data.reshape(shape), a.requires_grad)
    src = a.shape
    return record(out, (a,), lambda g: _maybe_corrupt("reshape", (g.reshape(src),)))


def concat_last_dim(tensors):
    """Concatenate [N, d_i] tensors into [N, sum d_i]."""
    val = np.concatenate([t.data for t in tensors], axis=-1)
    out = Tensor(val, any(t.requires_grad for t in tensors))
    widths = [t.shape[-1] for t in tensors]
    splits = np.cumsum(widths)[:-1]

    def vjp(g):
        return _maybe_corrupt("concat_last_dim", tuple(np.split(g, splits, axis=-1)))

    return record(out, tuple(tensors), vjp)


def stack_rows(tensors):
    """Stack k same-shape [B, D] tensors into [B, k, D]."""
    val = np.stack([t.data for t in tensors], axis=1)
    out = Tensor(val, any(t.requires_grad for t in tensors))

    def vjp(g):
        return _maybe_corrupt(
            "stack_rows", tuple(g[:, i, :] for i in range(len(tensors)))
        )

    return record(out, tuple(tensors), vjp)


def gather_rows(table, ids):
    """Row lookup table[ids]; gradient scatter-adds back into the table."""
    if table.data.ndim != 2:
        raise ShapeError("gather_rows table must be 2-D")
    ids = np.asarray(ids, dtype=np.int64)
    out = Tensor(table.data[ids], table.requires_grad)
    n = table.shape[0]

    def vjp(g):
        return _maybe_corrupt(
            "gather_rows", (kernels.scatter_add_rows(ids, np.ascontiguousarray(g), n),)
        )

    return record(out, (table,), vjp)


def scatter_add_rows(rows, ids, num_rows):
    """Accumulate [E, d] rows into a fresh [num_rows, d] table at ids."""
    ids = np.asarray(ids, dtype=np.int64)
    val = kernels.scatter_add_rows(ids, np.ascontiguousarray(rows.data), num_rows)
    out = Tensor(val, rows.requires_grad)
    return record(
        out, (rows,), lambda g: _maybe_corrupt("scatter_add_rows", (g[ids],))
    )


def segment_sum_rows(rows, offsets):
    """Per-segment row sums over a CSR partition of the leading axis."""
    offsets = np.asarray(offsets, dtype=np.int64)
    val = kernels.segment_sum_rows(np.ascontiguousarray(rows.data), offsets)
    out = Tensor(val, rows.requires_grad)
    seg = kernels.segment_ids(offsets)

    def vjp(g):
        return _maybe_corrupt("segment_sum_rows", (g[seg],))

    return record(out, (rows,), vjp)


def segment_softmax(scores, offsets):
    """Softmax normalized within each neighborhood segment.

    Outputs are positive and sum to 1 per non-empty segment; empty
    segments contribute no outputs. Stabilized by per-segment max
    subtraction.
    """
    if scores.data.ndim != 1:
        raise ShapeError("segment_softmax expects a 1-D score vector")
    offsets = np.asarray(offsets, dtype=np.int64)
    if offsets[-1] != len(scores.data):
        raise ShapeError("offsets do not partition the score vector")
    y = kernels.segment_softmax_fwd(np.ascontiguousarray(scores.data), offsets)
    out = Tensor(y, scores.requires_grad)

    def vjp(g):
        return _maybe_corrupt(
            "segment_softmax",
            (kernels.segment_softmax_vjp(y, np.ascontiguousarray(g), offsets),),
        )

    return record(out, (scores,), vjp)


def conv2d(x, k):
    """Valid-padding stride-1 cross-correlation of [B,C,H,W] with [O,C,kh,kw]."""
    if x.data.ndim != 4 or k.data.ndim != 4:
        raise ShapeError("conv2d expects 4-D input and kernels")
    if x.shape[1] != k.shape[1]:
        raise ShapeError(f"conv2d channels {x.shape[1]} vs {k.shape[1]}")
    if x.shape[2] < k.shape[2] or x.shape[3] < k.shape[3]:
        raise ShapeError(f"kernel {k.shape[2:]} larger than input {x.shape[2:]}")
    xv = np.ascontiguousarray(x.data)
    kv = np.ascontiguousarray(k.data)
    out = Tensor(kernels.conv2d_fwd(xv, kv), x.requires_grad or k.requires_grad)

    def vjp(g):
        g = np.ascontiguousarray(g)
        return _maybe_corrupt(
            "conv2d",
            (kernels.conv2d_grad_input(kv, g), kernels.conv2d_grad_kernels(xv, g)),
        )

    return record(out, (x, k), vjp)


def leaky_rectifier(a, slope=0.2):
    pos = a.data > 0
    out = Tensor(np.where(pos, a.data, slope * a.data), a.requires_grad)

    def vjp(g):
        return _maybe_corrupt("leaky_rectifier", (np.where(pos, g, slope * g),))

    return record(out, (a,), vjp)


def tanh(a):
    y = np.tanh(a.data)
    out = Tensor(y, a.requires_grad)
    return record(out, (a,), lambda g: _maybe_corrupt("tanh", (g * (1.0 - y * y),)))


def sigmoid(a):
    x = a.data
    y = np.empty_like(x)
    pos = x >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    y[~pos] = ex / (1.0 + ex)
    out = Tensor(y, a.requires_grad)
    return record(out, (a,), lambda g: _maybe_corrupt("sigmoid", (g * y * (1.0 - y),)))


def dropout(a, p, train_mode, rng):
    """Inverted dropout: scales kept entries by 1/(1-p); identity in eval."""
    if not train_mode or p <= 0.0:
        return a
    if not 0.0 <= p < 1.0:
        raise ShapeError(f"dropout rate {p} outside [0, 1)")
    keep = rng.random(a.shape) >= p
    factor = 1.0 / (1.0 - p)
    out = Tensor(np.where(keep, a.data * factor, 0.0), a.requires_grad)

    def vjp(g):
        return _maybe_corrupt("dropout", (np.where(keep, g * factor, 0.0),))

    return record(out, (a,), vjp)


class BatchNormState:
    """Running statistics for one normalization site (no affine params)."""

    def __init__(self, dim):
        self.mean = np.zeros(dim, dtype=np.float64)
        self.var = np.ones(dim, dtype=np.float64)


def batch_norm_1d(a, state, train_mode, momentum=0.1, epsilon=1e-5, update_stats=None):
    """Normalize [B, D] columns; batch stats in train mode, running in eval.

    Eval mode is a deterministic affine map of the input. update_stats
    defaults to train_mode; gradient checks freeze it so repeated forward
    passes stay pure.
    """
    if a.data.ndim != 2:
        raise ShapeError("batch_norm_1d expects [B, D]")
    if update_stats is None:
        update_stats = train_mode
    x = a.data
    if train_mode:
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + epsilon)
        xhat = (x - mu) * inv_std
        if update_stats:
            state.mean = (1.0 - momentum) * state.mean + momentum * mu
            state.var = (1.0 - momentum) * state.var + momentum * var
        out = Tensor(xhat, a.requires_grad)
        n = x.shape[0]

        def vjp(g):
            gsum = g.sum(axis=0)
            gdot = (g * xhat).sum(axis=0)
            gx = (inv_std / n) * (n * g - gsum - xhat * gdot)
            return _maybe_corrupt("batch_norm_1d", (gx,))

        return record(out, (a,), vjp)

    inv_std = 1.0 / np.sqrt(state.var + epsilon)
    out = Tensor((x - state.mean) * inv_std, a.requires_grad)
    return record(
        out, (a,), lambda g: _maybe_corrupt("batch_norm_1d", (g * inv_std,))
    )


def reduce_sum(a):
    """Sum of all entries, as a scalar tensor."""
    out = Tensor(np.asarray(a.data.sum()), a.requires_grad)

    def vjp(g):
        return _maybe_corrupt("reduce_sum", (np.broadcast_to(g, a.shape).copy(),))

    return record(out, (a,), vjp)


_BCE_EPS = 1e-12


def binary_cross_entropy_mean(probs, labels):
    """Mean of -[y log p + (1-y) log(1-p)], p clamped to [1e-12, 1-1e-12].

    labels is a constant array of the same shape as probs (multi-hot,
    possibly smoothed). The gradient uses the clamped p everywhere, so a
    saturated prediction still receives a finite pull back toward its
    label instead of going silent at the clamp boundary.
    """
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != probs.shape:
        raise ShapeError(f"bce shapes {probs.shape} vs {y.shape}")
    pc = np.clip(probs.data, _BCE_EPS, 1.0 - _BCE_EPS)
    terms = -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))
    out = Tensor(np.asarray(terms.mean()), probs.requires_grad)
    n = pc.size

    def vjp(g):
        gp = (pc - y) / (pc * (1.0 - pc)) / n
        return _maybe_corrupt("binary_cross_entropy_mean", (g * gp,))

    return record(out, (probs,), vjp)
