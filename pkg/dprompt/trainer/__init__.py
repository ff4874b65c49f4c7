"""
Trainer package.

SGD over prompt banks, the warm-up + cosine schedule, base/new evaluation,
run metrics and the ablation grid.
"""

from .optim import sgd_step, clip_grad_norm, SGD
from .schedule import lr_at
from .metrics import harmonic_mean, RunMetrics, AblationRow
from .train import TrainConfig, evaluate, train_prompts, text_template
from .ablation import AblationCell, DEFAULT_LADDER, resolve_cells, run_ablation_grid, ladder_medians

__all__ = [
    "sgd_step", "clip_grad_norm", "SGD", "lr_at", "harmonic_mean", "RunMetrics", "AblationRow",
    "TrainConfig", "evaluate", "train_prompts", "text_template",
    "AblationCell", "DEFAULT_LADDER", "resolve_cells", "run_ablation_grid", "ladder_medians",
]
