"""
Ablation grid: (mode, lctp) cells x seeds.
"""

import logging
import statistics
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Sequence, Tuple

from ..attention import AttentionMode
from ..errors import ConfigError
from ..prompting import PromptBanks
from ..toyvlm import DualEncoder, SyntheticTask
from .metrics import AblationRow
from .train import TrainConfig, train_prompts

logger = logging.getLogger(__name__)

Setup = Callable[[int], Tuple[DualEncoder, SyntheticTask, PromptBanks]]


@dataclass(frozen=True)
class AblationCell:
    name: str
    mode: AttentionMode
    lctp: bool

    def __post_init__(self):
        object.__setattr__(self, "mode", AttentionMode.parse(self.mode))


# vanilla multi-modal prompts -> + decoupled attention -> + shared reuse -> + class template
DEFAULT_LADDER = (
    AblationCell("MPL", AttentionMode.VANILLA_CONCAT, False),
    AblationCell("+DA", AttentionMode.DA, False),
    AblationCell("+SR", AttentionMode.DASR, False),
    AblationCell("DPL", AttentionMode.DASR, True),
)


def resolve_cells(names: Sequence) -> List[AblationCell]:
    """Cells from ladder names or {name, mode, lctp} mappings; empty -> default ladder."""
    if not names:
        return list(DEFAULT_LADDER)
    by_name = {c.name: c for c in DEFAULT_LADDER}
    cells = []
    for entry in names:
        if isinstance(entry, dict):
            try:
                cells.append(AblationCell(entry["name"], entry["mode"], bool(entry.get("lctp", True))))
            except KeyError as e:
                raise ConfigError(f"grid cell is missing {e}")
        elif entry in by_name:
            cells.append(by_name[entry])
        else:
            raise ConfigError(f"Unknown grid cell: {entry!r}. Known: {', '.join(by_name)}")
    return cells


def run_ablation_grid(cells: Sequence[AblationCell], config: TrainConfig, seeds: Sequence[int],
                      setup: Setup) -> List[AblationRow]:
    """
    Train every cell for every seed (sequentially).

    Args:
        cells: AblationCells
        config: Base TrainConfig (seed and lctp are set per run)
        seeds: Training seeds
        setup: seed -> (model, task, fresh banks)

    Returns:
        One AblationRow per (cell, seed), cell-major
    """
    if not seeds:
        raise ConfigError("ablation grid needs at least one seed")
    rows = []
    for cell in cells:
        for seed in seeds:
            model, task, banks = setup(seed)
            run_config = replace(config, seed=seed, lctp=cell.lctp)
            metrics = train_prompts(model, task, banks, run_config, cell.mode)
            logger.info("cell %s seed %d: base=%.2f new=%.2f H=%.2f", cell.name, seed,
                        metrics.base_acc, metrics.new_acc, metrics.harmonic_mean)
            rows.append(AblationRow(cell.name, cell.mode.value, cell.lctp, seed, metrics))
    return rows


def ladder_medians(rows: Sequence[AblationRow]) -> Dict[str, float]:
    """Median new-class accuracy per cell, in first-seen cell order."""
    grouped: Dict[str, List[float]] = {}
    for row in rows:
        grouped.setdefault(row.cell, []).append(row.metrics.new_acc)
    return {cell: float(statistics.median(values)) for cell, values in grouped.items()}
