"""
Attention modes and probes.

AttentionMode selects how prompt tokens P interact with instance tokens X
inside one attention call. AttentionProbe is an optional collector used by
diagnostics to observe what a forward pass actually computed.
"""

from enum import Enum
from typing import List, Optional

import numpy as np

from ..errors import ConfigError


class AttentionMode(str, Enum):
    """
    Prompt-attention variants over the same inputs.

    - VANILLA_CONCAT: softmax attention over the stacked sequence [X, P]
    - EXACT_DECOMPOSED: four sub-attentions recombined with exact f/h
    - DA: decoupled instance forwarding (sigma) + recombined prompt forwarding (beta)
    - DASR: decoupled instance forwarding + prompt forwarding without P-P attention
    - DARE: exact instance forwarding + recombined prompt forwarding (ablation)
    """

    VANILLA_CONCAT = "vanilla"
    EXACT_DECOMPOSED = "exact"
    DA = "da"
    DASR = "dasr"
    DARE = "dare"

    @classmethod
    def parse(cls, value) -> "AttentionMode":
        """
        Parse a mode from an enum, its value or its name (case-insensitive).

        Raises:
            ConfigError: If the mode is unknown
        """
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for mode in cls:
            if key in (mode.value, mode.name.lower()):
                return mode
        names = ", ".join(m.value for m in cls)
        raise ConfigError(f"Unknown attention mode: {value!r}. Must be one of: {names}")

    @property
    def decouples_instances(self) -> bool:
        """True when instance-instance attention never sees the prompts."""
        return self in (AttentionMode.DA, AttentionMode.DASR)


class AttentionProbe:
    """
    Records what one attention call computed.

    Attributes:
        instance_map: heads x N x N probabilities placed by instance queries on
            instance keys (a block of the full softmax for coupled modes)
        report: DecompositionReport when prompts were present, else None
    """

    def __init__(self):
        self.instance_map: Optional[np.ndarray] = None
        self.report = None

    def record(self, instance_maps: List[np.ndarray], report=None) -> None:
        self.instance_map = np.stack([np.array(m) for m in instance_maps])
        self.report = report
