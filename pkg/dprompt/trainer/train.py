"""
Few-shot prompt training and base/new evaluation.

Only prompt banks are optimised. The backbone is bound as constants and
its checksum is compared before and after every run.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..attention import AttentionMode
from ..errors import ConfigError, TrainingDivergedError, VerificationError
from ..numerics import GradTape, RngStream, concat_rows, cross_entropy
from ..prompting import CLASS_SLOT, PromptBanks, tokenize
from ..toyvlm import DualEncoder, PromptedModel, SyntheticTask
from .metrics import RunMetrics, harmonic_mean
from .optim import SGD
from .schedule import lr_at

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """
    Attributes:
        lctp: Keep the handcrafted template after the textual prompts; when
            False prompted text uses bare_template
    """

    epochs: int = 5
    batch_size: int = 4
    lr_visual: float = 0.1
    lr_textual: float = 0.002
    warmup_lr: float = 1e-5
    warmup_epochs: int = 1
    momentum: float = 0.9
    shots: int = 4
    eval_per_class: int = 6
    seed: int = 1
    lctp: bool = True
    template: str = "a photo of a [CLS]."
    bare_template: str = "[CLS]."

    def __post_init__(self):
        for name in ("epochs", "warmup_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("batch_size", "shots", "eval_per_class"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("lr_visual", "lr_textual", "warmup_lr"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        for name in ("template", "bare_template"):
            if tokenize(getattr(self, name)).count(CLASS_SLOT) != 1:
                raise ConfigError(f"{name} must contain exactly one [CLS] slot")


def text_template(config: TrainConfig, banks: Optional[PromptBanks]) -> str:
    """Template for class texts: the bare one only when textual prompts stand alone."""
    if banks is None or banks.textual is None or config.lctp:
        return config.template
    return config.bare_template


def evaluate(model: DualEncoder, task: SyntheticTask, banks: Optional[PromptBanks],
             mode, config: TrainConfig, sigma: Optional[float] = None,
             beta: Optional[float] = None) -> Tuple[float, float]:
    """
    Base and new accuracy (percent); each split is classified among its own classes.
    """
    prompted = PromptedModel(model, banks, mode, sigma, beta)
    template = text_template(config, banks)
    result = []
    for split in ("base", "new"):
        samples = task.eval_set(split, config.eval_per_class)
        classes = prompted.class_embeddings(task.names(task.split_classes(split)), template)
        preds = prompted.predict([patches for patches, _ in samples], classes)
        correct = sum(int(p == label) for p, (_, label) in zip(preds, samples))
        result.append(100.0 * correct / len(samples))
    return result[0], result[1]


def _batch_loss(model: DualEncoder, task: SyntheticTask, bound, mode, batch, template: str,
                sigma, beta):
    images = [model.encode_image(patches, bound, mode, sigma, beta) for patches, _ in batch]
    classes = model.class_embeddings(task.names(task.base_classes), template, bound, mode,
                                     sigma=sigma, beta=beta)
    image_block = images[0] if len(images) == 1 else concat_rows(*images)
    logits = model.classify(image_block, classes)
    return cross_entropy(logits, [label for _, label in batch])


def train_prompts(model: DualEncoder, task: SyntheticTask, banks: PromptBanks,
                  config: TrainConfig, mode, sigma: Optional[float] = None,
                  beta: Optional[float] = None) -> RunMetrics:
    """
    Train prompt banks in place on the few-shot base split.

    Args:
        model: Frozen backbone
        task: SyntheticTask
        banks: PromptBanks to optimise (mutated)
        config: TrainConfig
        mode: AttentionMode for both encoders
        sigma: Optional instance-forwarding override
        beta: Optional prompt-forwarding override

    Returns:
        RunMetrics

    Raises:
        TrainingDivergedError: If the loss or a gradient becomes non-finite
        VerificationError: If the backbone changed during training
    """
    mode = AttentionMode.parse(mode)
    checksum = model.backbone_checksum()
    template = text_template(config, banks)
    metrics = RunMetrics(parameter_count=banks.parameter_count)
    zs_base, zs_new = evaluate(model, task, None, mode, config)
    metrics.zero_shot = {"base": zs_base, "new": zs_new}

    data = task.few_shot(config.shots)
    steps_per_epoch = math.ceil(len(data) / config.batch_size)
    rng = RngStream(config.seed).child("train", "order")
    optimizers = {name: SGD(config.momentum) for name, _ in banks.items()}
    trained = bool(config.epochs and optimizers)
    base_lr = {"visual": config.lr_visual, "textual": config.lr_textual}
    if config.epochs and not optimizers:
        logger.warning("No prompt banks enabled; nothing to train")

    step = 0
    for epoch in range(config.epochs if trained else 0):
        order = rng.child("epoch", epoch).permutation(len(data))
        losses = []
        for start in range(0, len(data), config.batch_size):
            batch = [data[int(i)] for i in order[start:start + config.batch_size]]
            tape = GradTape()
            bound = banks.bind(tape)
            loss = _batch_loss(model, task, bound, mode, batch, template, sigma, beta)
            trace = {"epoch": epoch, "step": step}
            if not np.isfinite(loss.item()):
                raise TrainingDivergedError("training loss is not finite", trace)
            groups = [getattr(bound, name).tensors for name, _ in banks.items()]
            flat = tape.gradient(loss, [t for group in groups for t in group])
            lrs = {}
            for name, bank in banks.items():
                grads, flat = flat[:bank.depth], flat[bank.depth:]
                current = {str(i): p for i, p in enumerate(bank.prompts)}
                lr = lrs[name] = lr_at(step, config, steps_per_epoch, base_lr[name])
                updated = optimizers[name].step(current, {str(i): g for i, g in enumerate(grads)}, lr,
                                                trace={**trace, "bank": name})
                bank.assign([updated[str(i)] for i in range(bank.depth)])
            losses.append(loss.item())
            logger.debug("epoch %d step %d loss=%.5f", epoch + 1, step, losses[-1])
            step += 1
        metrics.epoch_losses.append(float(np.mean(losses)))
        base, new = evaluate(model, task, banks, mode, config, sigma, beta)
        metrics.accuracy_trace.append({"epoch": epoch + 1, "base": base, "new": new})
        metrics.epoch_lr.append(lrs)
        logger.info("epoch %d/%d loss=%.4f base=%.2f new=%.2f %s", epoch + 1, config.epochs,
                    metrics.epoch_losses[-1], base, new,
                    " ".join(f"lr_{name}={lr:.2e}" for name, lr in lrs.items()))

    if model.backbone_checksum() != checksum:
        raise VerificationError("backbone weights changed during prompt training")

    if trained:
        last = metrics.accuracy_trace[-1]
        metrics.base_acc, metrics.new_acc = last["base"], last["new"]
    else:
        metrics.base_acc, metrics.new_acc = zs_base, zs_new
    metrics.harmonic_mean = harmonic_mean(metrics.base_acc, metrics.new_acc)
    return metrics
