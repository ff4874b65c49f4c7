"""
Brief contrastive pre-training of the toy backbone.

Gives the frozen backbone some zero-shot ability before prompt learning:
symmetric image<->text cross-entropy over a batch of distinct classes, all
weights updated with momentum SGD on norm-clipped gradients.

Pre-training uses its own logit scale, lower than the one used to classify.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..errors import ConfigError, TrainingDivergedError
from ..numerics import GradTape, add, concat_rows, cross_entropy, scale, transpose
from .model import DualEncoder
from .task import SyntheticTask

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PretrainConfig:
    """
    Attributes:
        logit_scale: Inverse temperature of the contrastive logits
        clip_norm: Global gradient-norm ceiling per step
    """

    steps: int = 200
    lr: float = 0.02
    momentum: float = 0.9
    batch_classes: int = 6
    logit_scale: float = 10.0
    clip_norm: float = 1.0
    template: str = "a photo of a [CLS]."

    def __post_init__(self):
        if self.steps < 0:
            raise ConfigError(f"pretrain.steps must be >= 0, got {self.steps}")
        if not self.lr > 0:
            raise ConfigError("pretrain.lr must be positive")
        if self.batch_classes < 2:
            raise ConfigError("pretrain.batch_classes must be >= 2")
        if not self.logit_scale > 0:
            raise ConfigError("pretrain.logit_scale must be positive")
        if not self.clip_norm > 0:
            raise ConfigError("pretrain.clip_norm must be positive")


def contrastive_loss(model: DualEncoder, task: SyntheticTask, batch, template: str, params,
                     logit_scale: Optional[float] = None):
    images = [model.encode_image(patches, params=params) for patches, _ in batch]
    names = [task.class_names[cls] for _, cls in batch]
    texts = model.class_embeddings(names, template, params=params)
    logits = model.classify(concat_rows(*images), texts, logit_scale=logit_scale)
    targets = list(range(len(batch)))
    return scale(add(cross_entropy(logits, targets), cross_entropy(transpose(logits), targets)), 0.5)


def pretrain_backbone(model: DualEncoder, task: SyntheticTask, config: PretrainConfig) -> List[float]:
    """
    Fit the backbone in place.

    Returns:
        Loss per step

    Raises:
        TrainingDivergedError: If a loss or gradient becomes non-finite
    """
    from ..trainer.optim import SGD, clip_grad_norm

    optimizer = SGD(config.momentum)
    losses = []
    for step in range(config.steps):
        batch = task.pretrain_batch(step, config.batch_classes)
        tape = GradTape()
        params = model.params(tape)
        loss = contrastive_loss(model, task, batch, config.template, params, config.logit_scale)
        trace = {"phase": "pretrain", "step": step}
        if not np.isfinite(loss.item()):
            raise TrainingDivergedError("pretraining loss is not finite", trace)
        names = list(params)
        grads = dict(zip(names, tape.gradient(loss, [params[n] for n in names])))
        grads, norm = clip_grad_norm(grads, config.clip_norm)
        weights = model.weights
        updated = optimizer.step({n: weights[n] for n in names}, grads, config.lr, trace=trace)
        model.set_weights(updated)
        losses.append(loss.item())
        if step % 25 == 0 or step == config.steps - 1:
            logger.info("pretrain step %d/%d loss=%.4f grad_norm=%.3f", step + 1, config.steps,
                        losses[-1], norm)
    return losses
