"""Hot numeric kernels with selectable backend.

GATH_KERNELS=numba  force the @njit backend (ImportError if numba missing)
GATH_KERNELS=numpy  force the pure-numpy fallback
GATH_KERNELS=auto   numba when importable, numpy otherwise (default)

The two backends implement identical contracts; benchmarks/bench_kernels.py
compares them. Selection happens once at import time.
"""

import os
import warnings

from . import numpy_backend

_CHOICE = os.environ.get("GATH_KERNELS", "auto").lower()

if _CHOICE not in ("auto", "numba", "numpy"):
    raise RuntimeError(f"GATH_KERNELS must be auto|numba|numpy, got {_CHOICE!r}")

if _CHOICE == "numpy":
    _impl = numpy_backend
else:
    try:
        from . import numba_backend as _impl
    except ImportError:
        if _CHOICE == "numba":
            raise
        warnings.warn("numba not importable, falling back to numpy kernels")
        _impl = numpy_backend


def active_backend():
    return _impl.NAME


def get_backend(name):
    """Fetch a backend module by name (used by the benchmark)."""
    if name == "numpy":
        return numpy_backend
    if name == "numba":
        from . import numba_backend

        return numba_backend
    raise ValueError(name)


segment_sum = _impl.segment_sum
segment_ids = _impl.segment_ids
segment_softmax_fwd = _impl.segment_softmax_fwd
segment_softmax_vjp = _impl.segment_softmax_vjp
segment_sum_rows = _impl.segment_sum_rows
scatter_add_rows = _impl.scatter_add_rows
conv2d_fwd = _impl.conv2d_fwd
conv2d_grad_kernels = _impl.conv2d_grad_kernels
conv2d_grad_input = _impl.conv2d_grad_input
