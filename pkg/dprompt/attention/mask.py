"""
Key-visibility masks over the stacked [X, P] sequence.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ShapeError

_PARTS = ("x", "p")


@dataclass(frozen=True)
class MaskSpec:
    """
    Boolean visibility matrix (queries x keys) in [X, P] order.

    Sub-attentions read their block with block(query_part, key_part). A
    fully-true mask reproduces unmasked results exactly.
    """

    visible: np.ndarray
    num_instances: int
    num_prompts: int = 0

    def __post_init__(self):
        vis = np.array(self.visible, dtype=bool)
        total = self.num_instances + self.num_prompts
        if vis.shape != (total, total):
            raise ShapeError(f"mask must be {total}x{total}, got {vis.shape}")
        vis.setflags(write=False)
        object.__setattr__(self, "visible", vis)

    @classmethod
    def full(cls, num_instances: int, num_prompts: int = 0) -> "MaskSpec":
        total = num_instances + num_prompts
        return cls(np.ones((total, total), dtype=bool), num_instances, num_prompts)

    @classmethod
    def causal_instances(cls, num_instances: int, num_prompts: int = 0) -> "MaskSpec":
        """
        Causal instance block; prompt keys visible to every query and prompt
        queries see every key.
        """
        vis = np.ones((num_instances + num_prompts,) * 2, dtype=bool)
        vis[:num_instances, :num_instances] = np.tril(np.ones((num_instances,) * 2, dtype=bool))
        return cls(vis, num_instances, num_prompts)

    def block(self, query_part: str, key_part: str) -> np.ndarray:
        """
        Visibility block for one sub-attention.

        Args:
            query_part: "x" or "p"
            key_part: "x" or "p"
        """
        if query_part not in _PARTS or key_part not in _PARTS:
            raise ShapeError(f"mask block parts must be 'x' or 'p', got {query_part!r}, {key_part!r}")
        n = self.num_instances
        rows = slice(0, n) if query_part == "x" else slice(n, None)
        cols = slice(0, n) if key_part == "x" else slice(n, None)
        return self.visible[rows, cols]

    def prompts_visible_to_all(self) -> bool:
        """True when every query sees every prompt key (equivalence-safe)."""
        return bool(self.visible[:, self.num_instances:].all())

    def for_lengths(self, num_instances: int, num_prompts: int) -> "MaskSpec":
        """Check the mask matches the given sequence lengths."""
        if (num_instances, num_prompts) != (self.num_instances, self.num_prompts):
            raise ShapeError(
                f"mask built for N={self.num_instances}, M={self.num_prompts}; "
                f"got N={num_instances}, M={num_prompts}")
        return self


def block_or_none(mask: Optional[MaskSpec], query_part: str, key_part: str) -> Optional[np.ndarray]:
    return None if mask is None else mask.block(query_part, key_part)
