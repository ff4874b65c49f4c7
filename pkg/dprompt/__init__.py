"""
Decoupled prompt attention toolkit.

A verifiable, code-first implementation of prompt-augmented transformer
attention: the exact four-way decomposition of concatenated self-attention,
its decoupled approximations, and a toy dual encoder to exercise them.
"""

__version__ = "1.0.0"
