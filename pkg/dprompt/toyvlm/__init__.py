"""
Toy vision-language model.

A small dual encoder (visual + textual transformers with prompt-aware
attention), a synthetic base/new few-shot task, brief backbone
pre-training and attention diagnostics.
"""

from .encoder import EncoderConfig, EncoderTrace, TransformerEncoder, MASK_POLICIES
from .task import SyntheticTask, TaskConfig, CLASS_NAMES
from .model import DualEncoder, ModelConfig, PromptedModel, TEMPLATE_PRESETS
from .pretrain import PretrainConfig, pretrain_backbone, contrastive_loss
from .diagnostics import (
    attention_map_distance, class_token_maps, hf_ratio_by_layer, uniform_logit_ratio,
)

__all__ = [
    "EncoderConfig", "EncoderTrace", "TransformerEncoder", "MASK_POLICIES",
    "SyntheticTask", "TaskConfig", "CLASS_NAMES",
    "DualEncoder", "ModelConfig", "PromptedModel", "TEMPLATE_PRESETS",
    "PretrainConfig", "pretrain_backbone", "contrastive_loss",
    "attention_map_distance", "class_token_maps", "hf_ratio_by_layer", "uniform_logit_ratio",
]
