"""Minimal reverse-mode autodiff over float64 numpy arrays."""

from .gradcheck import GradCheckResult, finite_diff_check
from .ops import (
    BatchNormState,
    add,
    batch_norm_1d,
    binary_cross_entropy_mean,
    concat_last_dim,
    conv2d,
    dropout,
    gather_rows,
    hadamard,
    leaky_rectifier,
    matmul,
    reduce_sum,
    reshape,
    scale,
    scatter_add_rows,
    segment_softmax,
    segment_sum_rows,
    sigmoid,
    stack_rows,
    tanh,
    transpose,
)
from .serialize import array_from_bytes, array_to_bytes, load_array, save_array
from .tensor import Tape, Tensor, active_tape, as_tensor

__all__ = [
    "Tensor",
    "Tape",
    "active_tape",
    "as_tensor",
    "add",
    "scale",
    "matmul",
    "transpose",
    "hadamard",
    "reshape",
    "concat_last_dim",
    "stack_rows",
    "gather_rows",
    "scatter_add_rows",
    "segment_sum_rows",
    "segment_softmax",
    "conv2d",
    "leaky_rectifier",
    "tanh",
    "sigmoid",
    "dropout",
    "BatchNormState",
    "batch_norm_1d",
    "reduce_sum",
    "binary_cross_entropy_mean",
    "finite_diff_check",
    "GradCheckResult",
    "array_to_bytes",
    "array_from_bytes",
    "save_array",
    "load_array",
]
