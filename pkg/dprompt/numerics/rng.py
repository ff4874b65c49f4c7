"""
Seeded random streams.

RngStream wraps numpy's PCG64 bit generator (a permuted congruential
generator, i.e. an LCG with an output permutation). Independent sub-streams
are derived by hashing the parent seed with a path, so subsystems never
share draws and adding a new consumer does not shift existing ones.
"""

import hashlib
from typing import Any

import numpy as np

from ..errors import ConfigError
from .tensor import Tensor2D

_MAX_SEED = 2 ** 64


class RngStream:
    """
    Deterministic random number stream.

    The same seed yields the same draw sequence on every run and platform
    (PCG64 streams are fixed by numpy's compatibility policy).
    """

    ALGORITHM = "PCG64"

    def __init__(self, seed: int):
        """
        Args:
            seed: Integer in [0, 2**64)

        Raises:
            ConfigError: If the seed is out of range
        """
        if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
            raise ConfigError(f"seed must be an integer, got {type(seed).__name__}")
        if not 0 <= int(seed) < _MAX_SEED:
            raise ConfigError(f"seed must be in [0, 2**64), got {seed}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, *path: Any) -> "RngStream":
        """
        Derive an independent stream for a named subsystem.

        Args:
            *path: Path components (e.g. "task", "sample", class_id)

        Returns:
            New RngStream seeded from SHA-256 of "seed/path"
        """
        key = f"{self.seed}/" + "/".join(str(p) for p in path)
        digest = hashlib.sha256(key.encode("utf-8")).digest()
        return RngStream(int.from_bytes(digest[:8], "little"))

    def uniform(self, rows: int, cols: int, low: float = -1.0, high: float = 1.0) -> np.ndarray:
        return self._gen.uniform(low, high, size=(rows, cols))

    def normal(self, rows: int, cols: int, std: float = 1.0, mean: float = 0.0) -> np.ndarray:
        return self._gen.normal(mean, std, size=(rows, cols))

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def xavier_uniform(self, rows: int, cols: int) -> np.ndarray:
        """Glorot/Xavier uniform draw with fan_in=rows, fan_out=cols."""
        bound = float(np.sqrt(6.0 / (rows + cols)))
        return self._gen.uniform(-bound, bound, size=(rows, cols))

    def tensor(self, rows: int, cols: int, std: float = 1.0) -> Tensor2D:
        return Tensor2D(self.normal(rows, cols, std=std))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, algorithm={self.ALGORITHM})"
