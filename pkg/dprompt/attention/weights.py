"""
Attention projection weights.
"""

from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from ..errors import ConfigError, ShapeError
from ..numerics import RngStream, Tensor2D

Matrix = Union[Tensor2D, np.ndarray]


@dataclass(frozen=True)
class AttentionWeights:
    """
    Query/key/value/output projections for multi-head attention.

    Each matrix is model_dim x model_dim; head h owns columns
    [h*head_dim, (h+1)*head_dim) of wq, wk and wv. wo is applied by the
    encoder block after the mode-specific combination.
    """

    wq: Tensor2D
    wk: Tensor2D
    wv: Tensor2D
    wo: Tensor2D
    num_heads: int = 1

    def __post_init__(self):
        for name in ("wq", "wk", "wv", "wo"):
            m = getattr(self, name)
            if not isinstance(m, Tensor2D):
                object.__setattr__(self, name, Tensor2D(m))
        dim = self.wq.rows
        for name in ("wq", "wk", "wv", "wo"):
            if getattr(self, name).shape != (dim, dim):
                raise ShapeError(f"{name} must be {dim}x{dim}, got {getattr(self, name).shape}")
        if self.num_heads < 1 or dim % self.num_heads != 0:
            raise ConfigError(f"model_dim {dim} is not divisible by num_heads {self.num_heads}")

    @property
    def model_dim(self) -> int:
        return self.wq.rows

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.num_heads

    @property
    def scale(self) -> float:
        return 1.0 / float(np.sqrt(self.head_dim))

    @classmethod
    def random(cls, model_dim: int, num_heads: int, rng: RngStream) -> "AttentionWeights":
        """Xavier-uniform projections drawn from rng."""
        return cls(*(rng.xavier_uniform(model_dim, model_dim) for _ in range(4)),
                   num_heads=num_heads)

    def with_matrix(self, name: str, value: Matrix) -> "AttentionWeights":
        """Copy with one projection replaced (e.g. a taped tensor or zeros)."""
        return replace(self, **{name: value})

    def detached(self) -> "AttentionWeights":
        return AttentionWeights(self.wq.detach(), self.wk.detach(), self.wv.detach(),
                                self.wo.detach(), num_heads=self.num_heads)
