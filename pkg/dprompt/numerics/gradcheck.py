"""
Finite-difference gradient checking.

Compares reverse-mode gradients from GradTape against central differences
(f(x + eps*e) - f(x - eps*e)) / (2*eps), entry by entry.
"""

from typing import Callable

import numpy as np

from ..errors import ConfigError, EvaluationError, ShapeError
from .tensor import GradTape, Tensor2D

ScalarFn = Callable[[Tensor2D], Tensor2D]

_REL_FLOOR = 1e-8


def _scalar(out: Tensor2D) -> float:
    if not isinstance(out, Tensor2D) or out.shape != (1, 1):
        raise ShapeError("grad_check: f must return a 1x1 Tensor2D")
    value = out.item()
    if not np.isfinite(value):
        raise EvaluationError("grad_check: f(x) is not finite")
    return value


def analytic_gradient(f: ScalarFn, x) -> np.ndarray:
    """Reverse-mode gradient of f at x."""
    tape = GradTape()
    xt = tape.watch(x)
    out = f(xt)
    _scalar(out)
    if out.tape is not tape:
        # f did not depend on x at all
        return np.zeros(xt.shape)
    return tape.gradient(out, [xt])[0]


def numeric_gradient(f: ScalarFn, x, eps: float) -> np.ndarray:
    """Central finite differences of f at x, one entry at a time."""
    base = np.array(x.value if isinstance(x, Tensor2D) else x, dtype=np.float64)
    grad = np.zeros_like(base)
    for idx in np.ndindex(*base.shape):
        plus = base.copy()
        plus[idx] += eps
        minus = base.copy()
        minus[idx] -= eps
        grad[idx] = (_scalar(f(Tensor2D(plus))) - _scalar(f(Tensor2D(minus)))) / (2.0 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), _REL_FLOOR)
    return np.abs(analytic - numeric) / denom


def grad_check(f: ScalarFn, x, eps: float = 1e-5) -> float:
    """
    Maximum relative error between analytic and numeric gradients.

    Args:
        f: Scalar-valued function of a Tensor2D (must return 1x1)
        x: Point to check (Tensor2D or array-like)
        eps: Finite-difference step in [1e-7, 1e-3]

    Returns:
        max over entries of |a - n| / max(|a|, |n|, 1e-8)

    Raises:
        ConfigError: If eps is out of range
        EvaluationError: If f(x) is not finite
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ConfigError(f"grad_check: eps must be in [1e-7, 1e-3], got {eps}")
    x = x if isinstance(x, Tensor2D) else Tensor2D(x)
    _scalar(f(x.detach()))
    analytic = analytic_gradient(f, x.detach())
    numeric = numeric_gradient(f, x, eps)
    return float(relative_error(analytic, numeric).max())
