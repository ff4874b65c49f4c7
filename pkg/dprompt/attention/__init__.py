"""
Attention package.

Reference prompt-concatenated attention, its exact four-way decomposition
and the decoupled approximations, selectable per call.
"""

from .base import AttentionMode, AttentionProbe
from .weights import AttentionWeights
from .mask import MaskSpec
from .report import DecompositionReport
from .core import attend, decompose, prompt_attention_forward, hf_ratio_profile

__all__ = [
    "AttentionMode", "AttentionProbe", "AttentionWeights", "MaskSpec",
    "DecompositionReport", "attend", "decompose", "prompt_attention_forward",
    "hf_ratio_profile",
]
