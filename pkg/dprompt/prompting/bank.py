"""
Learnable prompt banks.

A PromptBank holds one m x model_dim prompt matrix for each of the first d
layers of an encoder. The trainer mutates banks between steps; forward
passes bind a read-only snapshot (optionally registered on a GradTape).
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError, PromptStateError, ShapeError
from ..numerics import GradTape, RngStream, Tensor2D


class Modality(str, Enum):
    VISUAL = "visual"
    TEXTUAL = "textual"

    @classmethod
    def parse(cls, value) -> "Modality":
        try:
            return cls(str(getattr(value, "value", value)).lower())
        except ValueError:
            raise ConfigError(f"Unknown modality: {value!r}. Must be 'visual' or 'textual'")


class FlowPolicy(str, Enum):
    """What happens to prompt outputs after the last prompted layer."""

    DISCARD = "discard"
    PROPAGATE = "propagate"

    @classmethod
    def parse(cls, value) -> "FlowPolicy":
        try:
            return cls(str(getattr(value, "value", value)).lower())
        except ValueError:
            raise ConfigError(f"Unknown flow policy: {value!r}. Must be 'discard' or 'propagate'")


@dataclass(frozen=True)
class InitScheme:
    """
    Prompt initialisation.

    Attributes:
        visual: "xavier_uniform" or "normal"
        textual_std: Standard deviation of the textual normal init
        textual_first_layer_phrase: Phrase whose token embeddings seed the
            first textual layer (None disables)
    """

    visual: str = "xavier_uniform"
    textual_std: float = 0.02
    textual_first_layer_phrase: Optional[str] = "a photo of a"

    def __post_init__(self):
        if self.visual not in ("xavier_uniform", "normal"):
            raise ConfigError(f"Unknown visual init: {self.visual!r}")
        if not self.textual_std > 0:
            raise ConfigError("textual_std must be positive")


@dataclass
class PromptBank:
    """
    Per-layer prompts for one modality.

    Invariants:
    - len(prompts) == depth, each length x model_dim
    - parameter_count == depth * length * model_dim
    """

    modality: Modality
    depth: int
    length: int
    model_dim: int
    prompts: List[np.ndarray]
    flow_policy: FlowPolicy = FlowPolicy.DISCARD

    def __post_init__(self):
        self.modality = Modality.parse(self.modality)
        self.flow_policy = FlowPolicy.parse(self.flow_policy)
        for name in ("depth", "length", "model_dim"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"prompt bank {name} must be >= 1, got {getattr(self, name)}")
        self.prompts = [self._checked(p) for p in self.prompts]
        if len(self.prompts) != self.depth:
            raise ShapeError(f"bank has {len(self.prompts)} layers, expected depth {self.depth}")

    def _checked(self, p) -> np.ndarray:
        arr = np.array(p, dtype=np.float64)
        if arr.shape != (self.length, self.model_dim):
            raise ShapeError(f"prompt matrix must be {self.length}x{self.model_dim}, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise ShapeError("prompt matrix has non-finite entries")
        return arr

    @property
    def parameter_count(self) -> int:
        return self.depth * self.length * self.model_dim

    def layer(self, layer_index: int) -> np.ndarray:
        """Fresh prompts for a 1-based layer index (<= depth)."""
        if not 1 <= layer_index <= self.depth:
            raise ConfigError(f"layer {layer_index} outside prompted range 1..{self.depth}")
        return self.prompts[layer_index - 1]

    def assign(self, prompts: Sequence[np.ndarray]) -> None:
        """Replace every layer's prompts (used by the optimizer)."""
        if len(prompts) != self.depth:
            raise ShapeError(f"expected {self.depth} prompt matrices, got {len(prompts)}")
        self.prompts = [self._checked(p) for p in prompts]

    def copy(self) -> "PromptBank":
        return PromptBank(self.modality, self.depth, self.length, self.model_dim,
                          [p.copy() for p in self.prompts], self.flow_policy)

    def bind(self, tape: Optional[GradTape] = None) -> "BoundBank":
        """Snapshot as tensors; with a tape, every layer is a watched input."""
        if tape is None:
            tensors = tuple(Tensor2D(p) for p in self.prompts)
        else:
            tensors = tuple(tape.watch(p) for p in self.prompts)
        return BoundBank(self.modality, self.depth, self.length, self.flow_policy, tensors)


@dataclass(frozen=True)
class BoundBank:
    """Read-only tensor view of a PromptBank for one forward pass."""

    modality: Modality
    depth: int
    length: int
    flow_policy: FlowPolicy
    tensors: Tuple[Tensor2D, ...]

    def layer(self, layer_index: int) -> Tensor2D:
        return self.tensors[layer_index - 1]


@dataclass
class PromptBanks:
    """Visual and textual banks of one model; either may be absent."""

    visual: Optional[PromptBank] = None
    textual: Optional[PromptBank] = None

    @property
    def parameter_count(self) -> int:
        return count_parameters([self.visual, self.textual])

    def copy(self) -> "PromptBanks":
        return PromptBanks(self.visual.copy() if self.visual else None,
                           self.textual.copy() if self.textual else None)

    def bind(self, tape: Optional[GradTape] = None) -> "BoundPrompts":
        return BoundPrompts(self.visual.bind(tape) if self.visual else None,
                            self.textual.bind(tape) if self.textual else None)

    def items(self) -> List[Tuple[str, PromptBank]]:
        return [(name, bank) for name, bank in (("visual", self.visual), ("textual", self.textual))
                if bank is not None]


@dataclass(frozen=True)
class BoundPrompts:
    visual: Optional[BoundBank] = None
    textual: Optional[BoundBank] = None


def build_bank(modality, depth: int, length: int, dim: int, init: InitScheme,
               rng: RngStream, encoder_layers: int,
               phrase_embedder: Optional[Callable[[str], np.ndarray]] = None,
               flow_policy=FlowPolicy.DISCARD) -> PromptBank:
    """
    Build and initialise a prompt bank.

    Args:
        modality: "visual" or "textual"
        depth: Number of prompted layers d (layers 1..d get fresh prompts)
        length: Prompts per layer m
        dim: Model dimension
        init: InitScheme
        rng: Random stream (each layer draws from its own child stream)
        encoder_layers: Layer count of the target encoder
        phrase_embedder: Maps a phrase to its token embeddings (L x dim);
            used for the first textual layer when the scheme names a phrase
        flow_policy: "discard" or "propagate"

    Returns:
        PromptBank

    Raises:
        ConfigError: If depth/length are < 1 or depth exceeds encoder_layers
    """
    modality = Modality.parse(modality)
    if depth < 1 or length < 1 or dim < 1:
        raise ConfigError(f"prompt depth, length and dim must be >= 1 (got {depth}, {length}, {dim})")
    if depth > encoder_layers:
        raise ConfigError(f"prompt depth {depth} exceeds encoder layer count {encoder_layers}")

    prompts = []
    for layer in range(1, depth + 1):
        layer_rng = rng.child("prompts", modality.value, layer)
        if modality is Modality.VISUAL:
            if init.visual == "xavier_uniform":
                p = layer_rng.xavier_uniform(length, dim)
            else:
                p = layer_rng.normal(length, dim, std=init.textual_std)
        else:
            p = layer_rng.normal(length, dim, std=init.textual_std)
            if layer == 1 and init.textual_first_layer_phrase and phrase_embedder is not None:
                phrase = np.asarray(phrase_embedder(init.textual_first_layer_phrase), dtype=np.float64)
                if phrase.ndim != 2 or phrase.shape[1] != dim:
                    raise ShapeError(f"phrase embeddings must be L x {dim}, got {phrase.shape}")
                rows = min(length, phrase.shape[0])
                p[:rows] = phrase[:rows]
        prompts.append(p)
    return PromptBank(modality, depth, length, dim, prompts, FlowPolicy.parse(flow_policy))


def count_parameters(banks: Iterable[Optional[PromptBank]]) -> int:
    """Sum of depth * length * model_dim over the banks (None entries skipped)."""
    return sum(b.parameter_count for b in banks if b is not None)


def format_thousands(count: int) -> str:
    """Render a parameter count in K (count / 1024), e.g. 73728 -> '72K'."""
    text = f"{count / 1024:.2f}".rstrip("0").rstrip(".")
    return f"{text}K"


def insert_prompts(layer_index: int, instance_tokens: Tensor2D,
                   carried_prompts: Optional[Tensor2D], bank) -> Tuple[Tensor2D, Optional[Tensor2D]]:
    """
    Choose the prompt tokens a layer attends with.

    Args:
        layer_index: 1-based layer index
        instance_tokens: X entering the layer
        carried_prompts: Prompt outputs of the previous layer (or None)
        bank: PromptBank, BoundBank or None

    Returns:
        (X, P) where P is the bank's fresh prompts for layers 1..depth,
        the carried prompts past depth under PROPAGATE, and None past depth
        under DISCARD (plain self-attention over X)

    Raises:
        ConfigError: If layer_index < 1
        PromptStateError: If PROPAGATE needs carried prompts that are missing
    """
    if layer_index < 1:
        raise ConfigError(f"layer_index must be >= 1, got {layer_index}")
    if bank is None:
        return instance_tokens, None
    if layer_index <= bank.depth:
        fresh = bank.layer(layer_index)
        return instance_tokens, fresh if isinstance(fresh, Tensor2D) else Tensor2D(fresh)
    if bank.flow_policy is FlowPolicy.PROPAGATE:
        if carried_prompts is None:
            raise PromptStateError(
                f"layer {layer_index} propagates prompts but none were carried from layer {layer_index - 1}")
        return instance_tokens, carried_prompts
    return instance_tokens, None
