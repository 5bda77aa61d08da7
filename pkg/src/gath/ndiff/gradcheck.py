"""Central-difference gradient verification for scalar-valued graphs."""

import numpy as np

from ..errors import NumericError
from .tensor import Tape


class GradCheckResult(float):
    """Max relative error, with a per-leaf breakdown in .per_leaf."""

    per_leaf = ()

    def __new__(cls, max_err, per_leaf):
        obj = super().__new__(cls, max_err)
        obj.per_leaf = tuple(per_leaf)
        return obj


def finite_diff_check(f, leaves, step=1e-5, names=None):
    """Compare analytic gradients of f against central differences.

    f is a zero-argument callable returning a scalar Tensor, re-evaluating
    the graph from the current leaf values. Any internal randomness
    (dropout) must be re-seeded identically on every call, and running
    statistics must be frozen, so that f is a pure function of the leaves.

    Returns the max over all leaf entries of
    |g_analytic - g_numeric| / max(1, |g_numeric|).
    """
    leaves = list(leaves)
    if names is None:
        names = [f"leaf{i}" for i in range(len(leaves))]
    for leaf in leaves:
        leaf.grad = None
    with Tape() as tape:
        loss = f()
        base = loss.item()
        if not np.isfinite(base):
            raise NumericError(f"loss is non-finite at the check point: {base}")
        tape.backward(loss)

    per_leaf = []
    worst = 0.0
    for name, leaf in zip(names, leaves):
        analytic = leaf.grad if leaf.grad is not None else np.zeros(leaf.shape)
        if not np.all(np.isfinite(analytic)):
            raise NumericError(f"non-finite analytic gradient in {name}")
        numeric = np.zeros(leaf.data.size, dtype=np.float64)
        flat = leaf.data.flat
        for i in range(leaf.data.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = f().item()
            flat[i] = orig - step
            lo = f().item()
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                raise NumericError(f"non-finite perturbed loss in {name}[{i}]")
            numeric[i] = (hi - lo) / (2.0 * step)
        ga = np.asarray(analytic, dtype=np.float64).reshape(-1)
        err = np.abs(ga - numeric) / np.maximum(1.0, np.abs(numeric))
        leaf_err = float(err.max()) if err.size else 0.0
        per_leaf.append((name, leaf_err))
        worst = max(worst, leaf_err)
    return GradCheckResult(worst, per_leaf)
