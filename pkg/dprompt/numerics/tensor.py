"""
Dense 2-D tensors and the gradient tape.

Tensor2D is an immutable float64 matrix. Tensors produced from inputs that
were registered on a GradTape are recorded on that tape, so gradients of a
scalar output can be replayed in reverse creation order.
"""

from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import EvaluationError, ShapeError, TapeError


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor2D:
    """
    Immutable dense real matrix (row-major, double precision).

    Invariants:
    - rows >= 1 and cols >= 1
    - every entry is finite
    """

    __slots__ = ("_value", "_tape", "_index")

    def __init__(self, value):
        """
        Create a constant tensor (not registered on any tape).

        Args:
            value: Nested sequence or numpy array with exactly two dimensions

        Raises:
            ShapeError: If the value is not 2-D or has an empty dimension
            EvaluationError: If any entry is NaN or infinite
        """
        arr = np.array(value, dtype=np.float64)
        self._value = _validated(arr)
        self._tape = None
        self._index = None

    @classmethod
    def _adopt(cls, arr: np.ndarray, tape: Optional["GradTape"] = None,
               index: Optional[int] = None) -> "Tensor2D":
        """Wrap a freshly computed array without copying it."""
        t = cls.__new__(cls)
        t._value = _validated(np.asarray(arr, dtype=np.float64))
        t._tape = tape
        t._index = index
        return t

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "Tensor2D":
        return cls(rows)

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "Tensor2D":
        return cls(np.zeros((rows, cols)))

    @classmethod
    def eye(cls, n: int) -> "Tensor2D":
        return cls(np.eye(n))

    @property
    def value(self) -> np.ndarray:
        """Read-only view of the underlying array."""
        return self._value

    @property
    def rows(self) -> int:
        return self._value.shape[0]

    @property
    def cols(self) -> int:
        return self._value.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self._value.shape

    @property
    def data(self) -> Tuple[float, ...]:
        """Entries in row-major order."""
        return tuple(float(v) for v in self._value.ravel())

    @property
    def tape(self) -> Optional["GradTape"]:
        return self._tape

    @property
    def requires_grad(self) -> bool:
        return self._tape is not None

    def numpy(self) -> np.ndarray:
        """Writable copy of the values."""
        return np.array(self._value)

    def detach(self) -> "Tensor2D":
        """Same values, no tape."""
        return Tensor2D._adopt(self._value)

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self._value[0, 0])

    def __add__(self, other):
        from .ops import add
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        from .ops import add
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        from .ops import sub
        return sub(self, _as_tensor(other))

    def __mul__(self, other):
        from .ops import mul, scale
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, _as_tensor(other))

    def __repr__(self) -> str:
        grad = ", tape" if self._tape is not None else ""
        return f"Tensor2D({self.rows}x{self.cols}{grad})"


def _as_tensor(x) -> Tensor2D:
    if isinstance(x, Tensor2D):
        return x
    return Tensor2D(x)


def _validated(arr: np.ndarray) -> np.ndarray:
    if arr.ndim != 2:
        raise ShapeError(f"Tensor2D needs a 2-D value, got {arr.ndim}-D")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"Tensor2D cannot have an empty dimension, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise EvaluationError("non-finite entry in tensor value")
    if arr.flags.writeable:
        if arr.base is not None or not arr.flags.owndata:
            arr = arr.copy()
        arr.setflags(write=False)
    return arr


class _Node:
    __slots__ = ("parents", "backward", "shape")

    def __init__(self, parents: Tuple[Optional[int], ...],
                 backward: Optional[BackwardFn], shape: Tuple[int, int]):
        self.parents = parents
        self.backward = backward
        self.shape = shape


class GradTape:
    """
    Records one forward pass for reverse-mode differentiation.

    A tape is single-writer: build it, run the forward pass, then ask for
    gradients. Nodes are kept in creation order, which is a valid
    topological order of the graph, so the backward sweep is deterministic.
    """

    def __init__(self):
        self._nodes: List[_Node] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def watch(self, x) -> Tensor2D:
        """
        Register an input so gradients with respect to it can be requested.

        Args:
            x: Tensor2D (constant or already on this tape) or array-like

        Returns:
            Tensor2D recorded on this tape

        Raises:
            TapeError: If x is already recorded on another tape
        """
        if isinstance(x, Tensor2D):
            if x._tape is self:
                return x
            if x._tape is not None:
                raise TapeError("tensor is already recorded on another tape")
            value = x._value
        else:
            value = np.array(x, dtype=np.float64)
        index = len(self._nodes)
        t = Tensor2D._adopt(value, self, index)
        self._nodes.append(_Node((), None, t.shape))
        return t

    def record(self, value: np.ndarray, inputs: Sequence[Tensor2D],
               backward: BackwardFn) -> Tensor2D:
        """Append an operation result; constants among inputs get no gradient."""
        parents = tuple(t._index if t._tape is self else None for t in inputs)
        index = len(self._nodes)
        t = Tensor2D._adopt(value, self, index)
        self._nodes.append(_Node(parents, backward, t.shape))
        return t

    def gradient(self, output: Tensor2D, sources: Sequence[Tensor2D]) -> List[np.ndarray]:
        """
        Gradients of a scalar output with respect to recorded tensors.

        Args:
            output: 1x1 tensor recorded on this tape
            sources: Tensors recorded on this tape (inputs or intermediates)

        Returns:
            One array per source, shaped like the source

        Raises:
            TapeError: If output or a source belongs to another tape
            ShapeError: If output is not 1x1
        """
        if output._tape is not self:
            raise TapeError("output is not recorded on this tape")
        if output.shape != (1, 1):
            raise ShapeError(f"gradient needs a scalar (1x1) output, got {output.shape}")
        wanted = set()
        for s in sources:
            if s._tape is not self:
                raise TapeError("gradient source is not recorded on this tape")
            wanted.add(s._index)

        grads: Dict[int, np.ndarray] = {output._index: np.ones((1, 1))}
        found: Dict[int, np.ndarray] = {}
        for idx in range(output._index, -1, -1):
            g = grads.pop(idx, None)
            if g is None:
                continue
            if idx in wanted:
                found[idx] = g
            node = self._nodes[idx]
            if node.backward is None:
                continue
            for parent, pg in zip(node.parents, node.backward(g)):
                if parent is None or pg is None:
                    continue
                if parent in grads:
                    grads[parent] = grads[parent] + pg
                else:
                    grads[parent] = pg
        return [np.array(found[s._index]) if s._index in found else np.zeros(s.shape)
                for s in sources]
