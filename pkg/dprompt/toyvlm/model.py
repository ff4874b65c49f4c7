"""
Toy dual-encoder vision-language model.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from ..attention import AttentionMode
from ..errors import ConfigError, ShapeError
from ..numerics import (
    GradTape, RngStream, Tensor2D, add, concat_rows, matmul, scale, slice_rows, transpose,
)
from ..prompting import BoundPrompts, PromptBanks, Vocabulary, assemble_text_input, tokenize
from .encoder import EncoderConfig, EncoderTrace, TransformerEncoder
from .task import SyntheticTask

logger = logging.getLogger(__name__)

TEMPLATE_PRESETS = (
    "a photo of a [CLS].",
    "a photo of a [CLS], a type of pet.",
    "a photo of a [CLS], a type of flower.",
    "a photo of a [CLS], a type of food.",
    "a centered satellite photo of [CLS].",
    "a photo of a [CLS], a type of aircraft.",
    "a photo of a person doing [CLS].",
    "[CLS] texture.",
    "[CLS].",
)


@dataclass(frozen=True)
class ModelConfig:
    visual: EncoderConfig = field(default_factory=EncoderConfig)
    textual: EncoderConfig = field(default_factory=EncoderConfig)
    embed_dim: int = 16
    max_text_len: int = 24
    logit_scale: float = 100.0

    def __post_init__(self):
        if self.embed_dim < 1:
            raise ConfigError(f"embed_dim must be >= 1, got {self.embed_dim}")
        if self.max_text_len < 2:
            raise ConfigError(f"max_text_len must be >= 2, got {self.max_text_len}")
        if not self.logit_scale > 0:
            raise ConfigError("logit_scale must be positive")


def _bound(banks) -> BoundPrompts:
    if banks is None:
        return BoundPrompts()
    if isinstance(banks, PromptBanks):
        return banks.bind()
    return banks


class DualEncoder:
    """
    Visual and textual encoders sharing one embedding space.

    Weights are a flat dict of float64 arrays keyed by name. After
    pretraining they are treated as frozen: prompt training only ever
    binds them as constants, and backbone_checksum() audits that.
    """

    def __init__(self, config: ModelConfig, vocab: Vocabulary, num_patches: int,
                 patch_dim: int, weights: Mapping[str, np.ndarray]):
        self.config = config
        self.vocab = vocab
        self.num_patches = num_patches
        self.patch_dim = patch_dim
        self.visual = TransformerEncoder("visual", config.visual, config.embed_dim)
        self.textual = TransformerEncoder("textual", config.textual, config.embed_dim)
        self._weights: Dict[str, np.ndarray] = {}
        self._constants: Optional[Dict[str, Tensor2D]] = None
        self.set_weights(weights)

    @classmethod
    def build(cls, config: ModelConfig, task: SyntheticTask, rng: RngStream,
              extra_texts: Iterable[str] = ()) -> "DualEncoder":
        """
        Randomly initialise a model for a task.

        Class-name token embeddings are the task prototypes pushed through a
        fixed random map, a stand-in for pretrained word semantics.
        """
        texts = list(TEMPLATE_PRESETS) + list(extra_texts) + list(task.class_names)
        vocab = Vocabulary.from_texts(texts)
        dv, dt = config.visual.model_dim, config.textual.model_dim
        tc = task.config

        weights = {}
        weights.update(cls._visual_inputs(rng.child("visual", "inputs"), tc.num_patches, tc.patch_dim, dv))
        weights.update(TransformerEncoder("visual", config.visual, config.embed_dim).init_weights(rng))
        embed = rng.child("textual", "tok_embed").normal(len(vocab), dt, std=0.02)
        word_map = rng.child("textual", "word_map").xavier_uniform(tc.patch_dim, dt)
        for idx, name in enumerate(task.class_names):
            for token in tokenize(name):
                embed[vocab.id_of(token)] = task.prototypes[idx] @ word_map
        weights["textual.tok_embed"] = embed
        weights["textual.pos"] = rng.child("textual", "pos").normal(config.max_text_len, dt, std=0.02)
        weights.update(TransformerEncoder("textual", config.textual, config.embed_dim).init_weights(rng))
        return cls(config, vocab, tc.num_patches, tc.patch_dim, weights)

    @staticmethod
    def _visual_inputs(rng: RngStream, num_patches: int, patch_dim: int, dim: int) -> Dict[str, np.ndarray]:
        return {
            "visual.patch_proj": rng.child("patch_proj").xavier_uniform(patch_dim, dim),
            "visual.cls": rng.child("cls").normal(1, dim, std=0.02),
            "visual.pos": rng.child("pos").normal(num_patches + 1, dim, std=0.02),
        }

    # weights

    @property
    def weights(self) -> Dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self._weights.items()}

    def set_weights(self, weights: Mapping[str, np.ndarray]) -> None:
        if self._weights and set(weights) != set(self._weights):
            raise ConfigError("weight names differ from the model's")
        new = {}
        for name, value in weights.items():
            arr = np.array(value, dtype=np.float64)
            if name in self._weights and arr.shape != self._weights[name].shape:
                raise ShapeError(f"weight {name} must be {self._weights[name].shape}, got {arr.shape}")
            new[name] = arr
        self._weights = new
        self._constants = None

    def params(self, tape: Optional[GradTape] = None) -> Dict[str, Tensor2D]:
        """Weights as tensors: cached constants, or watched inputs of tape."""
        if tape is not None:
            return {k: tape.watch(v) for k, v in sorted(self._weights.items())}
        if self._constants is None:
            self._constants = {k: Tensor2D(v) for k, v in self._weights.items()}
        return self._constants

    def backbone_checksum(self) -> str:
        digest = hashlib.sha256()
        for name in sorted(self._weights):
            arr = self._weights[name]
            digest.update(name.encode("utf-8"))
            digest.update(repr(arr.shape).encode("utf-8"))
            digest.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return digest.hexdigest()

    @property
    def logit_scale(self) -> float:
        return self.config.logit_scale

    def embed_phrase(self, phrase: str) -> np.ndarray:
        ids = self.vocab.encode(phrase)
        if not ids:
            raise ShapeError(f"phrase has no tokens: {phrase!r}")
        return self._weights["textual.tok_embed"][ids]

    # encoding

    def image_tokens(self, patches, params: Mapping[str, Tensor2D]) -> Tensor2D:
        arr = np.asarray(patches.value if isinstance(patches, Tensor2D) else patches, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ShapeError(f"image needs at least one patch, got shape {arr.shape}")
        if arr.shape != (self.num_patches, self.patch_dim):
            raise ShapeError(f"image must be {self.num_patches}x{self.patch_dim} patches, got {arr.shape}")
        patches = patches if isinstance(patches, Tensor2D) else Tensor2D(arr)
        embedded = matmul(patches, params["visual.patch_proj"])
        return add(concat_rows(params["visual.cls"], embedded), params["visual.pos"])

    def encode_image(self, patches, banks=None, mode=None, sigma: Optional[float] = None,
                     beta: Optional[float] = None, trace: Optional[EncoderTrace] = None,
                     params: Optional[Mapping[str, Tensor2D]] = None) -> Tensor2D:
        """
        Unit-norm image embedding (1 x embed_dim), pooled at the class token.

        Args:
            patches: num_patches x patch_dim array or Tensor2D
            banks: PromptBanks / BoundPrompts / None (zero-shot)
            mode: AttentionMode (defaults to the visual encoder config)
            sigma: Optional instance-forwarding override
            beta: Optional prompt-forwarding override
            trace: Optional EncoderTrace for per-layer probes
            params: Tensor weights (defaults to frozen constants)

        Raises:
            ShapeError: If patches are empty or mis-shaped
        """
        params = params if params is not None else self.params()
        tokens = self.image_tokens(patches, params)
        return self.visual.forward(tokens, params, _bound(banks).visual, mode, pool_index=0,
                                   sigma=sigma, beta=beta, trace=trace)

    def text_tokens(self, layout, params: Mapping[str, Tensor2D]) -> Tensor2D:
        m, length = layout.num_prompts, len(layout.manual_prompt_tokens)
        if m + length > self.config.max_text_len:
            raise ShapeError(f"text of {m} prompts + {length} tokens exceeds max_text_len "
                             f"{self.config.max_text_len}")
        onehot = np.zeros((length, len(self.vocab)))
        onehot[np.arange(length), list(layout.manual_prompt_tokens)] = 1.0
        embedded = matmul(Tensor2D(onehot), params["textual.tok_embed"])
        return add(embedded, slice_rows(params["textual.pos"], m, m + length))

    def encode_text(self, class_name: str, template: str, banks=None, mode=None,
                    sigma: Optional[float] = None, beta: Optional[float] = None,
                    trace: Optional[EncoderTrace] = None,
                    params: Optional[Mapping[str, Tensor2D]] = None) -> Tensor2D:
        """Unit-norm text embedding pooled at the last manual-prompt token."""
        params = params if params is not None else self.params()
        bound = _bound(banks).textual
        layout = assemble_text_input(class_name, template, bound, self.vocab)
        tokens = self.text_tokens(layout, params)
        return self.textual.forward(tokens, params, bound, mode, pool_index=tokens.rows - 1,
                                    sigma=sigma, beta=beta, trace=trace)

    def class_embeddings(self, names: Sequence[str], template: str, banks=None, mode=None,
                         params: Optional[Mapping[str, Tensor2D]] = None, **kwargs) -> Tensor2D:
        bound = _bound(banks)
        rows = [self.encode_text(n, template, bound, mode, params=params, **kwargs) for n in names]
        return rows[0] if len(rows) == 1 else concat_rows(*rows)

    def classify(self, image_embedding: Tensor2D, class_embeddings: Tensor2D,
                 logit_scale: Optional[float] = None) -> Tensor2D:
        """logit_scale * cosine similarity, (images x classes); the scale defaults to the config's."""
        if image_embedding.cols != class_embeddings.cols:
            raise ShapeError(f"embedding widths differ: {image_embedding.cols} vs {class_embeddings.cols}")
        s = self.logit_scale if logit_scale is None else logit_scale
        return scale(matmul(image_embedding, transpose(class_embeddings)), s)


@dataclass
class PromptedModel:
    """A DualEncoder with one prompt configuration and attention mode."""

    model: DualEncoder
    banks: Optional[PromptBanks] = None
    mode: AttentionMode = AttentionMode.DA
    sigma: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self):
        self.mode = AttentionMode.parse(self.mode)

    def encode_image(self, patches, trace: Optional[EncoderTrace] = None) -> Tensor2D:
        return self.model.encode_image(patches, self.banks, self.mode, self.sigma, self.beta, trace)

    def encode_text(self, class_name: str, template: str) -> Tensor2D:
        return self.model.encode_text(class_name, template, self.banks, self.mode, self.sigma, self.beta)

    def class_embeddings(self, names: Sequence[str], template: str) -> Tensor2D:
        return self.model.class_embeddings(names, template, self.banks, self.mode,
                                           sigma=self.sigma, beta=self.beta)

    def predict(self, images: Sequence[np.ndarray], class_embeddings: Tensor2D) -> List[int]:
        preds = []
        for patches in images:
            logits = self.model.classify(self.encode_image(patches), class_embeddings)
            preds.append(int(np.argmax(logits.value[0])))
        return preds
