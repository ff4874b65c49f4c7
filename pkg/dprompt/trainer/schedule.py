"""
Learning-rate schedule: constant warm-up, then cosine decay to zero.
"""

import math

from ..errors import ConfigError


def lr_at(step: int, config, steps_per_epoch: int, base_lr: float) -> float:
    """
    Learning rate for a 0-based global step.

    Warm-up steps (warmup_epochs * steps_per_epoch) use config.warmup_lr.
    After that lr = base_lr * (1 + cos(pi * t / T)) / 2 with t counted from
    the end of warm-up and T the remaining steps; t >= T gives 0.

    Raises:
        ConfigError: If step < 0 or steps_per_epoch < 1
    """
    if step < 0:
        raise ConfigError(f"step must be >= 0, got {step}")
    if steps_per_epoch < 1:
        raise ConfigError(f"steps_per_epoch must be >= 1, got {steps_per_epoch}")
    warm = config.warmup_epochs * steps_per_epoch
    if step < warm:
        return config.warmup_lr
    total = config.epochs * steps_per_epoch - warm
    t = step - warm
    if total <= 0 or t >= total:
        return 0.0
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * t / total))
