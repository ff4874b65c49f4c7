"""
Pre-norm transformer encoder with prompt-aware attention.

Each block computes

    X <- X + Wo(attn(LN1(X), LN1(P)))      P <- P + Wo(attn_p(...))
    X <- X + MLP(LN2(X))                   P <- P + MLP(LN2(P))

where attn is prompt_attention_forward in the configured AttentionMode and
P comes from insert_prompts. Prompts pass through the same LayerNorm, Wo
and MLP weights as instance tokens.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional

import numpy as np

from ..attention import AttentionMode, AttentionProbe, AttentionWeights, MaskSpec, prompt_attention_forward
from ..errors import ConfigError, ShapeError
from ..numerics import (
    RngStream, Tensor2D, add, gelu, layer_norm, matmul, normalize_rows, slice_rows,
)
from ..prompting import insert_prompts

logger = logging.getLogger(__name__)

MASK_POLICIES = ("bidirectional", "causal")

_LAYER_KEYS = ("ln1_g", "ln1_b", "wq", "wk", "wv", "wo", "ln2_g", "ln2_b", "w1", "b1", "w2", "b2")


@dataclass(frozen=True)
class EncoderConfig:
    """
    Attributes:
        num_layers: Transformer blocks
        model_dim: Token width
        num_heads: Attention heads (must divide model_dim)
        mlp_hidden_dim: MLP hidden width
        attention_mode: Default AttentionMode for prompted layers
        mask_policy: "bidirectional" or "causal" (instance block lower-triangular)
    """

    num_layers: int = 2
    model_dim: int = 16
    num_heads: int = 2
    mlp_hidden_dim: int = 32
    attention_mode: str = "da"
    mask_policy: str = "bidirectional"

    def __post_init__(self):
        for name in ("num_layers", "model_dim", "num_heads", "mlp_hidden_dim"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.model_dim % self.num_heads != 0:
            raise ConfigError(f"model_dim {self.model_dim} is not divisible by num_heads {self.num_heads}")
        if self.mask_policy not in MASK_POLICIES:
            raise ConfigError(f"mask_policy must be one of {MASK_POLICIES}, got {self.mask_policy!r}")
        object.__setattr__(self, "attention_mode", AttentionMode.parse(self.attention_mode).value)


@dataclass
class EncoderTrace:
    """Per-layer record of one encoder pass (1-based layer -> entry)."""

    probes: Dict[int, AttentionProbe] = field(default_factory=dict)
    attention_inputs: Dict[int, np.ndarray] = field(default_factory=dict)
    prompt_inputs: Dict[int, Optional[np.ndarray]] = field(default_factory=dict)

    def probe(self, layer: int) -> AttentionProbe:
        return self.probes.setdefault(layer, AttentionProbe())


class TransformerEncoder:
    """
    Stateless encoder definition; weights are passed to forward by name.

    Parameter names are "<prefix>.layer<i>.<key>" for blocks plus
    "<prefix>.lnf_g", "<prefix>.lnf_b" and "<prefix>.proj".
    """

    def __init__(self, prefix: str, config: EncoderConfig, embed_dim: int):
        self.prefix = prefix
        self.config = config
        self.embed_dim = embed_dim

    def name(self, key: str, layer: Optional[int] = None) -> str:
        if layer is None:
            return f"{self.prefix}.{key}"
        return f"{self.prefix}.layer{layer}.{key}"

    def init_weights(self, rng: RngStream) -> Dict[str, np.ndarray]:
        cfg = self.config
        d, hdim = cfg.model_dim, cfg.mlp_hidden_dim
        weights: Dict[str, np.ndarray] = {}
        for i in range(1, cfg.num_layers + 1):
            r = rng.child(self.prefix, "layer", i)
            weights[self.name("ln1_g", i)] = np.ones((1, d))
            weights[self.name("ln1_b", i)] = np.zeros((1, d))
            for key in ("wq", "wk", "wv", "wo"):
                weights[self.name(key, i)] = r.child(key).xavier_uniform(d, d)
            weights[self.name("ln2_g", i)] = np.ones((1, d))
            weights[self.name("ln2_b", i)] = np.zeros((1, d))
            weights[self.name("w1", i)] = r.child("w1").xavier_uniform(d, hdim)
            weights[self.name("b1", i)] = np.zeros((1, hdim))
            weights[self.name("w2", i)] = r.child("w2").xavier_uniform(hdim, d)
            weights[self.name("b2", i)] = np.zeros((1, d))
        weights[self.name("lnf_g")] = np.ones((1, d))
        weights[self.name("lnf_b")] = np.zeros((1, d))
        weights[self.name("proj")] = rng.child(self.prefix, "proj").xavier_uniform(d, self.embed_dim)
        return weights

    def attention_weights(self, params: Mapping[str, Tensor2D], layer: int) -> AttentionWeights:
        return AttentionWeights(params[self.name("wq", layer)], params[self.name("wk", layer)],
                                params[self.name("wv", layer)], params[self.name("wo", layer)],
                                num_heads=self.config.num_heads)

    def _mask(self, n: int, m: int) -> Optional[MaskSpec]:
        if self.config.mask_policy == "causal":
            return MaskSpec.causal_instances(n, m)
        return None

    def _mlp(self, params, layer: int, t: Tensor2D) -> Tensor2D:
        h = layer_norm(t, params[self.name("ln2_g", layer)], params[self.name("ln2_b", layer)])
        h = gelu(add(matmul(h, params[self.name("w1", layer)]), params[self.name("b1", layer)]))
        return add(matmul(h, params[self.name("w2", layer)]), params[self.name("b2", layer)])

    def forward(self, tokens: Tensor2D, params: Mapping[str, Tensor2D], bank=None,
                mode=None, pool_index: int = 0, sigma: Optional[float] = None,
                beta: Optional[float] = None, trace: Optional[EncoderTrace] = None) -> Tensor2D:
        """
        Encode a token sequence into a unit-norm 1 x embed_dim embedding.

        Args:
            tokens: Instance tokens after input embedding (N x model_dim)
            params: Named weights (Tensor2D, constants or taped)
            bank: BoundBank / PromptBank for this encoder, or None
            mode: AttentionMode (defaults to the config's mode)
            pool_index: Instance row pooled after the final LayerNorm
            sigma: Optional instance-forwarding override
            beta: Optional prompt-forwarding override
            trace: Optional EncoderTrace filled layer by layer

        Returns:
            1 x embed_dim unit-norm Tensor2D

        Raises:
            ShapeError: On width mismatch or an out-of-range pool_index
        """
        cfg = self.config
        if tokens.cols != cfg.model_dim:
            raise ShapeError(f"{self.prefix} encoder expects {cfg.model_dim} columns, got {tokens.cols}")
        if not 0 <= pool_index < tokens.rows:
            raise ShapeError(f"pool_index {pool_index} outside 0..{tokens.rows - 1}")
        mode = AttentionMode.parse(mode if mode is not None else cfg.attention_mode)

        x, carried = tokens, None
        for i in range(1, cfg.num_layers + 1):
            x, p = insert_prompts(i, x, carried, bank)
            g1, b1 = params[self.name("ln1_g", i)], params[self.name("ln1_b", i)]
            hx = layer_norm(x, g1, b1)
            hp = layer_norm(p, g1, b1) if p is not None else None
            probe = None
            if trace is not None:
                probe = trace.probe(i)
                trace.attention_inputs[i] = np.array(hx.value)
                trace.prompt_inputs[i] = None if hp is None else np.array(hp.value)
            w = self.attention_weights(params, i)
            ax, ap, _ = prompt_attention_forward(
                hx, hp, w, mode, mask=self._mask(x.rows, 0 if p is None else p.rows),
                sigma=sigma, beta=beta, with_report=False, probe=probe)
            x = add(x, matmul(ax, w.wo))
            x = add(x, self._mlp(params, i, x))
            if ap is not None:
                p = add(p, matmul(ap, w.wo))
                p = add(p, self._mlp(params, i, p))
            carried = p

        x = layer_norm(x, params[self.name("lnf_g")], params[self.name("lnf_b")])
        pooled = slice_rows(x, pool_index, pool_index + 1)
        return normalize_rows(matmul(pooled, params[self.name("proj")]))
