"""
Plain SGD with optional momentum, over named numpy parameters.
"""

from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from ..errors import ConfigError, TrainingDivergedError


def sgd_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], lr: float,
             momentum: float = 0.0, buffers: Optional[Dict[str, np.ndarray]] = None,
             trace: Optional[dict] = None) -> Dict[str, np.ndarray]:
    """
    One SGD update: p <- p - lr * v, with v = g (no momentum) or the
    momentum buffer v <- momentum * v + g.

    Args:
        params: Current values by name
        grads: Gradients by name (same shapes)
        lr: Learning rate (>= 0)
        momentum: Momentum coefficient in [0, 1)
        buffers: Momentum buffers, updated in place
        trace: Context attached to a divergence error (epoch, step, ...)

    Returns:
        New parameter values (inputs are not modified)

    Raises:
        TrainingDivergedError: If any gradient is non-finite
    """
    if lr < 0 or not 0.0 <= momentum < 1.0:
        raise ConfigError(f"invalid SGD settings lr={lr}, momentum={momentum}")
    for name, g in grads.items():
        if not np.isfinite(g).all():
            raise TrainingDivergedError(f"non-finite gradient for {name}", {**(trace or {}), "param": name})
    if buffers is None:
        buffers = {}
    updated = {}
    for name, p in params.items():
        g = grads[name]
        if momentum:
            buf = buffers.get(name)
            buf = g.copy() if buf is None else momentum * buf + g
            buffers[name] = buf
            g = buf
        updated[name] = p - lr * g
    return updated


class SGD:
    """Keeps momentum buffers across steps."""

    def __init__(self, momentum: float = 0.0):
        self.momentum = momentum
        self.buffers: Dict[str, np.ndarray] = {}

    def step(self, params, grads, lr: float, trace: Optional[dict] = None) -> Dict[str, np.ndarray]:
        return sgd_step(params, grads, lr, self.momentum, self.buffers, trace)


def clip_grad_norm(grads: Mapping[str, np.ndarray], max_norm: float) -> Tuple[Dict[str, np.ndarray], float]:
    """
    Rescale gradients so their global L2 norm is at most max_norm.

    Returns:
        (clipped gradients, norm before clipping)

    Raises:
        ConfigError: If max_norm is not positive
    """
    if not max_norm > 0:
        raise ConfigError(f"max_norm must be positive, got {max_norm}")
    norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    coef = min(1.0, max_norm / (norm + 1e-12))
    return {name: g * coef for name, g in grads.items()}, norm
