"""
Numerics package.

Provides the dense tensor type, the gradient tape, differentiable
operations, seeded random streams and gradient checking.
"""

from .tensor import Tensor2D, GradTape
from .ops import (
    add, sub, mul, scale, tanh, gelu, matmul, transpose,
    softmax_rows, logsumexp_rows, cross_entropy, layer_norm, normalize_rows,
    concat_rows, concat_cols, slice_rows, slice_cols, sum_all, mean_all,
)
from .rng import RngStream
from .gradcheck import grad_check, analytic_gradient, numeric_gradient, relative_error

__all__ = [
    "Tensor2D", "GradTape", "RngStream",
    "add", "sub", "mul", "scale", "tanh", "gelu", "matmul", "transpose",
    "softmax_rows", "logsumexp_rows", "cross_entropy", "layer_norm", "normalize_rows",
    "concat_rows", "concat_cols", "slice_rows", "slice_cols", "sum_all", "mean_all",
    "grad_check", "analytic_gradient", "numeric_gradient", "relative_error",
]
