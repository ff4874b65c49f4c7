"""
Differentiable operations on Tensor2D.

Each operation computes its value with numpy and, when any input is
recorded on a GradTape, records a backward closure on that tape. Inputs
that are not on a tape are treated as constants.
"""

from typing import Optional, Sequence

import numpy as np

from ..errors import EvaluationError, ShapeError, TapeError
from .tensor import GradTape, Tensor2D

_GELU_C = float(np.sqrt(2.0 / np.pi))
_GELU_A = 0.044715


def _tape_of(inputs: Sequence[Tensor2D]) -> Optional[GradTape]:
    tape = None
    for t in inputs:
        if t.tape is None:
            continue
        if tape is None:
            tape = t.tape
        elif t.tape is not tape:
            raise TapeError("cannot combine tensors recorded on different tapes")
    return tape


def _result(value: np.ndarray, inputs: Sequence[Tensor2D], backward) -> Tensor2D:
    tape = _tape_of(inputs)
    if tape is None:
        return Tensor2D._adopt(value)
    return tape.record(value, inputs, backward)


def _broadcast_shape(a: Tensor2D, b: Tensor2D, op: str):
    shape = []
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast")
        shape.append(max(da, db))
    return tuple(shape)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _visible(mask: Optional[np.ndarray], shape) -> Optional[np.ndarray]:
    if mask is None:
        return None
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != tuple(shape):
        raise ShapeError(f"mask shape {mask.shape} does not match logits {tuple(shape)}")
    if not mask.any(axis=1).all():
        raise ShapeError("mask hides every key for at least one query row")
    if mask.all():
        return None
    return mask


# -- elementwise ---------------------------------------------------------

def add(a: Tensor2D, b: Tensor2D) -> Tensor2D:
    """a + b with 2-D broadcasting of row/column vectors."""
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return _result(a.value + b.value, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: Tensor2D, b: Tensor2D) -> Tensor2D:
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _result(a.value - b.value, (a, b),
                   lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a: Tensor2D, b: Tensor2D) -> Tensor2D:
    """Elementwise product with 2-D broadcasting."""
    _broadcast_shape(a, b, "mul")
    av, bv = a.value, b.value
    return _result(av * bv, (a, b),
                   lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def scale(a: Tensor2D, s: float) -> Tensor2D:
    s = float(s)
    return _result(a.value * s, (a,), lambda g: (g * s,))


def tanh(x: Tensor2D) -> Tensor2D:
    y = np.tanh(x.value)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),))


def gelu(x: Tensor2D) -> Tensor2D:
    """GELU, tanh approximation."""
    xv = x.value
    t = np.tanh(_GELU_C * (xv + _GELU_A * xv ** 3))
    y = 0.5 * xv * (1.0 + t)

    def backward(g):
        dt = (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_A * xv * xv)
        return (g * (0.5 * (1.0 + t) + 0.5 * xv * dt),)

    return _result(y, (x,), backward)


# -- linear algebra ------------------------------------------------------

def _ordered_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Sequential accumulation over k, so every entry equals the naive
    # s += a[i, k] * b[k, j] loop bit for bit on any platform.
    terms = a[:, :, None] * b[None, :, :]
    return np.cumsum(terms, axis=1)[:, -1, :]


def matmul(a: Tensor2D, b: Tensor2D) -> Tensor2D:
    """
    Matrix product with a fixed summation order.

    Raises:
        ShapeError: If a.cols != b.rows
    """
    if a.cols != b.rows:
        raise ShapeError(f"matmul: {a.shape} x {b.shape} inner dimensions differ")
    av, bv = a.value, b.value
    return _result(_ordered_product(av, bv), (a, b),
                   lambda g: (_ordered_product(g, bv.T), _ordered_product(av.T, g)))


def transpose(a: Tensor2D) -> Tensor2D:
    return _result(a.value.T.copy(), (a,), lambda g: (g.T,))


# -- softmax family ------------------------------------------------------

def _stable_exp(m: np.ndarray, visible: Optional[np.ndarray]):
    if visible is None:
        row_max = m.max(axis=1, keepdims=True)
        return np.exp(m - row_max), row_max
    shifted = np.where(visible, m, -np.inf)
    row_max = shifted.max(axis=1, keepdims=True)
    e = np.where(visible, np.exp(np.where(visible, m - row_max, 0.0)), 0.0)
    return e, row_max


def softmax_rows(m: Tensor2D, mask=None) -> Tensor2D:
    """
    Row-wise softmax, stabilised by subtracting the row maximum.

    Args:
        m: Logits
        mask: Optional boolean matrix (same shape); False entries get
            probability exactly 0

    Returns:
        Tensor whose rows are nonnegative and sum to 1
    """
    visible = _visible(mask, m.shape)
    e, _ = _stable_exp(m.value, visible)
    s = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=1, keepdims=True)),)

    return _result(s, (m,), backward)


def logsumexp_rows(m: Tensor2D, mask=None) -> Tensor2D:
    """log(sum(exp(row))) per row as an n x 1 column; mask as in softmax_rows."""
    visible = _visible(mask, m.shape)
    e, row_max = _stable_exp(m.value, visible)
    total = e.sum(axis=1, keepdims=True)
    s = e / total

    def backward(g):
        return (g * s,)

    return _result(row_max + np.log(total), (m,), backward)


def cross_entropy(logits: Tensor2D, targets: Sequence[int]) -> Tensor2D:
    """
    Mean negative log-likelihood of integer targets under row softmax.

    Raises:
        ShapeError: If the number of targets differs from the number of rows
    """
    targets = np.asarray(targets, dtype=int)
    if targets.shape != (logits.rows,):
        raise ShapeError(f"cross_entropy: {targets.shape[0] if targets.ndim else 0} targets "
                         f"for {logits.rows} rows")
    if (targets < 0).any() or (targets >= logits.cols).any():
        raise ShapeError("cross_entropy: target index out of range")
    e, row_max = _stable_exp(logits.value, None)
    total = e.sum(axis=1, keepdims=True)
    log_probs = logits.value - row_max - np.log(total)
    rows = np.arange(logits.rows)
    loss = -log_probs[rows, targets].mean()
    probs = e / total

    def backward(g):
        d = probs.copy()
        d[rows, targets] -= 1.0
        return (d * (g[0, 0] / logits.rows),)

    return _result(np.array([[loss]]), (logits,), backward)


# -- normalisation -------------------------------------------------------

def layer_norm(x: Tensor2D, gamma: Tensor2D, beta: Tensor2D, eps: float = 1e-5) -> Tensor2D:
    """
    Row-wise layer normalisation with 1 x D affine parameters.

    Raises:
        ShapeError: If gamma/beta are not 1 x x.cols
    """
    if gamma.shape != (1, x.cols) or beta.shape != (1, x.cols):
        raise ShapeError(f"layer_norm: affine params must be 1x{x.cols}")
    xv = x.value
    mu = xv.mean(axis=1, keepdims=True)
    centered = xv - mu
    inv = 1.0 / np.sqrt((centered * centered).mean(axis=1, keepdims=True) + eps)
    xhat = centered * inv
    gv = gamma.value
    d = x.cols

    def backward(g):
        dxhat = g * gv
        dx = inv / d * (d * dxhat - dxhat.sum(axis=1, keepdims=True)
                        - xhat * (dxhat * xhat).sum(axis=1, keepdims=True))
        return (dx, (g * xhat).sum(axis=0, keepdims=True), g.sum(axis=0, keepdims=True))

    return _result(xhat * gv + beta.value, (x, gamma, beta), backward)


def normalize_rows(x: Tensor2D) -> Tensor2D:
    """
    Scale each row to unit L2 norm.

    Raises:
        EvaluationError: If a row has zero norm
    """
    norms = np.sqrt((x.value * x.value).sum(axis=1, keepdims=True))
    if (norms == 0.0).any():
        raise EvaluationError("normalize_rows: zero-norm row")
    y = x.value / norms

    def backward(g):
        return ((g - y * (g * y).sum(axis=1, keepdims=True)) / norms,)

    return _result(y, (x,), backward)


# -- structure -----------------------------------------------------------

def concat_rows(*parts: Tensor2D) -> Tensor2D:
    """Stack tensors along the sequence (row) axis."""
    if not parts:
        raise ShapeError("concat_rows needs at least one tensor")
    cols = parts[0].cols
    if any(p.cols != cols for p in parts):
        raise ShapeError("concat_rows: column counts differ")
    bounds = np.cumsum([0] + [p.rows for p in parts])

    def backward(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _result(np.concatenate([p.value for p in parts], axis=0), parts, backward)


def concat_cols(*parts: Tensor2D) -> Tensor2D:
    if not parts:
        raise ShapeError("concat_cols needs at least one tensor")
    rows = parts[0].rows
    if any(p.rows != rows for p in parts):
        raise ShapeError("concat_cols: row counts differ")
    bounds = np.cumsum([0] + [p.cols for p in parts])

    def backward(g):
        return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _result(np.concatenate([p.value for p in parts], axis=1), parts, backward)


def _check_range(start: int, stop: int, size: int, what: str):
    if not 0 <= start < stop <= size:
        raise ShapeError(f"{what}: range [{start}, {stop}) invalid for size {size}")


def slice_rows(x: Tensor2D, start: int, stop: int) -> Tensor2D:
    _check_range(start, stop, x.rows, "slice_rows")
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        full[start:stop] = g
        return (full,)

    return _result(x.value[start:stop], (x,), backward)


def slice_cols(x: Tensor2D, start: int, stop: int) -> Tensor2D:
    _check_range(start, stop, x.cols, "slice_cols")
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        full[:, start:stop] = g
        return (full,)

    return _result(x.value[:, start:stop], (x,), backward)


def sum_all(x: Tensor2D) -> Tensor2D:
    shape = x.shape
    return _result(np.array([[x.value.sum()]]), (x,),
                   lambda g: (np.full(shape, g[0, 0]),))


def mean_all(x: Tensor2D) -> Tensor2D:
    shape = x.shape
    n = x.rows * x.cols
    return _result(np.array([[x.value.mean()]]), (x,),
                   lambda g: (np.full(shape, g[0, 0] / n),))
