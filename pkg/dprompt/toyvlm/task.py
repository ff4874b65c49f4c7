"""
Synthetic few-shot image classification task.

Each class owns a unit-norm prototype. An image is num_patches patches;
patch j is a fixed per-position linear mixing of the prototype plus
Gaussian noise. New-class prototypes are rotated by shift_angle before
mixing, so new classes come from a shifted distribution.
"""

from dataclasses import asdict, dataclass
from typing import Dict, List, Tuple

import numpy as np

from ..errors import ConfigError
from ..numerics import RngStream

CLASS_NAMES = (
    "cat", "dog", "rose", "tulip", "car", "truck", "apple", "pear", "owl", "eagle",
    "shark", "whale", "oak", "pine", "boat", "plane", "lily", "daisy", "horse", "zebra",
    "lemon", "mango", "train", "bus",
)

Sample = Tuple[np.ndarray, int]


@dataclass(frozen=True)
class TaskConfig:
    num_classes: int = 10
    num_patches: int = 4
    patch_dim: int = 8
    noise_std: float = 0.3
    shift_angle: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if self.num_classes < 2 or self.num_classes % 2:
            raise ConfigError(f"num_classes must be an even number >= 2, got {self.num_classes}")
        if self.num_patches < 1 or self.patch_dim < 2:
            raise ConfigError("num_patches must be >= 1 and patch_dim >= 2")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")


def class_name(index: int) -> str:
    return CLASS_NAMES[index] if index < len(CLASS_NAMES) else f"class{index}"


class SyntheticTask:
    """
    Seed-deterministic base/new task.

    The first half of a seeded class permutation is the base split, the
    second half the new split. Samples are addressed by (split tag, class,
    index) so every draw is reproducible on its own.
    """

    def __init__(self, config: TaskConfig):
        self.config = config
        rng = RngStream(config.seed)
        c, dim = config.num_classes, config.patch_dim

        order = rng.child("split").permutation(c)
        self.base_classes: Tuple[int, ...] = tuple(int(i) for i in order[: c // 2])
        self.new_classes: Tuple[int, ...] = tuple(int(i) for i in order[c // 2:])
        self.class_names: Tuple[str, ...] = tuple(class_name(i) for i in range(c))

        protos = rng.child("prototypes").normal(c, dim)
        self.prototypes = protos / np.linalg.norm(protos, axis=1, keepdims=True)

        mix_rng = rng.child("mixing")
        self.mixing = [np.eye(dim) + 0.5 * mix_rng.child(j).normal(dim, dim, std=1.0 / np.sqrt(dim))
                       for j in range(config.num_patches)]
        self.rotation = self._rotation(dim, config.shift_angle)
        self._rng = rng

    @staticmethod
    def _rotation(dim: int, angle: float) -> np.ndarray:
        r = np.eye(dim)
        cos, sin = np.cos(angle), np.sin(angle)
        r[0, 0], r[0, 1], r[1, 0], r[1, 1] = cos, -sin, sin, cos
        return r

    def is_new(self, cls: int) -> bool:
        return cls in self.new_classes

    def names(self, classes) -> List[str]:
        return [self.class_names[i] for i in classes]

    def sample(self, cls: int, index: int, tag: str = "train") -> np.ndarray:
        """One image (num_patches x patch_dim) of class cls."""
        if not 0 <= cls < self.config.num_classes:
            raise ConfigError(f"class {cls} outside 0..{self.config.num_classes - 1}")
        proto = self.prototypes[cls]
        if self.is_new(cls):
            proto = self.rotation @ proto
        noise = self._rng.child("sample", tag, cls, index).normal(
            self.config.num_patches, self.config.patch_dim, std=self.config.noise_std)
        return np.stack([m @ proto for m in self.mixing]) + noise

    def few_shot(self, shots: int) -> List[Sample]:
        """Training set over base classes; labels index into base_classes."""
        if shots < 1:
            raise ConfigError(f"shots must be >= 1, got {shots}")
        return [(self.sample(cls, k, "train"), label)
                for label, cls in enumerate(self.base_classes) for k in range(shots)]

    def eval_set(self, split: str, per_class: int) -> List[Sample]:
        """Held-out images for "base" or "new"; labels index into that split."""
        classes = self.split_classes(split)
        return [(self.sample(cls, k, "test"), label)
                for label, cls in enumerate(classes) for k in range(per_class)]

    def split_classes(self, split: str) -> Tuple[int, ...]:
        if split == "base":
            return self.base_classes
        if split == "new":
            return self.new_classes
        raise ConfigError(f"split must be 'base' or 'new', got {split!r}")

    def pretrain_batch(self, step: int, batch_classes: int) -> List[Sample]:
        """Pretraining batch drawn from all classes; labels are class ids."""
        k = min(batch_classes, self.config.num_classes)
        classes = self._rng.child("pretrain", step).permutation(self.config.num_classes)[:k]
        return [(self.sample(int(cls), step, "pretrain"), int(cls)) for cls in classes]

    def snapshot(self) -> Dict:
        return asdict(self.config)

    @classmethod
    def from_snapshot(cls, snapshot: Dict) -> "SyntheticTask":
        return cls(TaskConfig(**snapshot))
