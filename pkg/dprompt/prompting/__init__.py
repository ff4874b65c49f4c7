"""
Prompting package.

Learnable prompt banks, their initialisation and accounting, per-layer
prompt insertion, the text-side input layout and bank serialization.
"""

from .bank import (
    Modality, FlowPolicy, InitScheme, PromptBank, BoundBank, PromptBanks, BoundPrompts,
    build_bank, count_parameters, format_thousands, insert_prompts,
)
from .text import Vocabulary, TextInputLayout, assemble_text_input, tokenize, CLASS_SLOT
from .serialize import save_bank, load_bank, dumps_bank, loads_bank

__all__ = [
    "Modality", "FlowPolicy", "InitScheme", "PromptBank", "BoundBank", "PromptBanks",
    "BoundPrompts", "build_bank", "count_parameters", "format_thousands", "insert_prompts",
    "Vocabulary", "TextInputLayout", "assemble_text_input", "tokenize", "CLASS_SLOT",
    "save_bank", "load_bank", "dumps_bank", "loads_bank",
]
