"""
Run metrics and the base/new harmonic mean.
"""

from dataclasses import asdict, dataclass, field
from typing import Dict, List

from ..errors import MetricDomainError


def harmonic_mean(base: float, new: float) -> float:
    """
    H = 2 * base * new / (base + new); 0 when both are 0.

    Raises:
        MetricDomainError: If either accuracy is negative
    """
    if base < 0 or new < 0:
        raise MetricDomainError(f"accuracies must be non-negative, got {base} and {new}")
    if base + new == 0:
        return 0.0
    return 2.0 * base * new / (base + new)


@dataclass
class RunMetrics:
    """
    Outcome of one prompt-training run. Accuracies are percentages.

    Attributes:
        accuracy_trace: Per-epoch {"epoch", "base", "new"}, one entry per epoch
        epoch_lr: Per-epoch learning rate of each bank at its last step
        zero_shot: {"base", "new"} before any training
    """

    epoch_losses: List[float] = field(default_factory=list)
    base_acc: float = 0.0
    new_acc: float = 0.0
    harmonic_mean: float = 0.0
    parameter_count: int = 0
    accuracy_trace: List[Dict[str, float]] = field(default_factory=list)
    epoch_lr: List[Dict[str, float]] = field(default_factory=list)
    zero_shot: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class AblationRow:
    cell: str
    mode: str
    lctp: bool
    seed: int
    metrics: RunMetrics

    def to_record(self) -> dict:
        return {"cell": self.cell, "mode": self.mode, "lctp": self.lctp, "seed": self.seed,
                "base": self.metrics.base_acc, "new": self.metrics.new_acc,
                "h": self.metrics.harmonic_mean, "params": self.metrics.parameter_count}
