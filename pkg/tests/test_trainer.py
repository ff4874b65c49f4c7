"""Tests for the optimizer, schedule, metrics, training loop and ablation grid."""

import math
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from dprompt.attention import AttentionMode
from dprompt.errors import ConfigError, MetricDomainError, TrainingDivergedError
from dprompt.numerics import GradTape
from dprompt.prompting import PromptBanks
from dprompt.trainer import (
    DEFAULT_LADDER, AblationCell, SGD, TrainConfig, clip_grad_norm, evaluate, harmonic_mean,
    ladder_medians, lr_at, resolve_cells, run_ablation_grid, sgd_step, text_template, train_prompts,
)


class TestHarmonicMean:
    @pytest.mark.parametrize("base,new,h", [
        (69.34, 74.22, 71.70),
        (82.69, 63.22, 71.66),
        (80.47, 71.69, 75.83),
        (81.89, 71.85, 76.54),
        (81.56, 72.30, 76.65),
        (82.28, 75.14, 78.55),
        (83.42, 75.76, 79.40),
        (83.48, 72.42, 77.55),
        (83.21, 74.51, 78.62),
        (83.15, 74.93, 78.83),
    ])
    def test_published_pairs(self, base, new, h):
        assert abs(harmonic_mean(base, new) - h) <= 0.01

    def test_edges(self):
        assert harmonic_mean(0.0, 0.0) == 0.0
        assert harmonic_mean(50.0, 0.0) == 0.0
        with pytest.raises(MetricDomainError):
            harmonic_mean(-1.0, 10.0)


class TestSchedule:
    config = TrainConfig(epochs=5, warmup_epochs=1, warmup_lr=1e-5)

    def test_warmup_is_constant(self):
        assert [lr_at(s, self.config, 4, 0.1) for s in range(4)] == [1e-5] * 4

    def test_cosine_after_warmup(self):
        assert lr_at(4, self.config, 4, 0.1) == pytest.approx(0.1)
        assert lr_at(12, self.config, 4, 0.1) == pytest.approx(0.05)
        assert lr_at(8, self.config, 4, 0.1) == pytest.approx(0.05 * (1 + math.cos(math.pi / 4)))
        assert lr_at(20, self.config, 4, 0.1) == 0.0

    def test_invalid_step(self):
        with pytest.raises(ConfigError):
            lr_at(-1, self.config, 4, 0.1)


class TestSGD:
    def test_plain_step(self):
        out = sgd_step({"p": np.array([1.0, 2.0])}, {"p": np.array([0.5, -1.0])}, 0.1)
        assert_allclose(out["p"], [0.95, 2.1])

    def test_momentum_buffers(self):
        opt = SGD(momentum=0.9)
        p = {"p": np.zeros(2)}
        p = opt.step(p, {"p": np.ones(2)}, 1.0)
        p = opt.step(p, {"p": np.ones(2)}, 1.0)
        assert_allclose(p["p"], [-2.9, -2.9])

    def test_clip_grad_norm(self):
        clipped, norm = clip_grad_norm({"a": np.array([3.0]), "b": np.array([4.0, 0.0])}, 1.0)
        assert norm == pytest.approx(5.0)
        assert_allclose(clipped["a"], [0.6])
        assert_allclose(clipped["b"], [0.8, 0.0])
        small, _ = clip_grad_norm({"a": np.array([0.3, 0.4])}, 1.0)
        assert_allclose(small["a"], [0.3, 0.4])
        with pytest.raises(ConfigError):
            clip_grad_norm({"a": np.ones(1)}, 0.0)

    def test_non_finite_gradient(self):
        with pytest.raises(TrainingDivergedError) as info:
            sgd_step({"p": np.zeros(1)}, {"p": np.array([np.nan])}, 0.1, trace={"step": 3})
        assert info.value.trace["step"] == 3


class TestTrainConfig:
    def test_template_slots(self):
        with pytest.raises(ConfigError):
            TrainConfig(template="a photo")

    def test_text_template(self, banks):
        lctp_off = TrainConfig(lctp=False)
        assert text_template(lctp_off, banks) == "[CLS]."
        assert text_template(lctp_off, PromptBanks(visual=banks.visual)) == lctp_off.template
        assert text_template(TrainConfig(), banks) == "a photo of a [CLS]."


FAST = TrainConfig(epochs=1, batch_size=2, shots=1, eval_per_class=1, warmup_epochs=0)


class TestTraining:
    def test_zero_epochs_report_zero_shot(self, model, task, banks):
        config = replace(FAST, epochs=0)
        zero_shot = evaluate(model, task, None, AttentionMode.DASR, config)
        metrics = train_prompts(model, task, banks, config, AttentionMode.DASR)
        assert (metrics.base_acc, metrics.new_acc) == zero_shot
        assert metrics.zero_shot == {"base": zero_shot[0], "new": zero_shot[1]}
        assert metrics.epoch_losses == [] and metrics.accuracy_trace == []
        assert metrics.parameter_count == 2 * 2 * 8

    def test_only_prompts_change(self, model, task, banks):
        checksum = model.backbone_checksum()
        before = banks.copy()
        metrics = train_prompts(model, task, banks, FAST, AttentionMode.DA)
        assert model.backbone_checksum() == checksum
        assert len(metrics.epoch_losses) == 1 and np.isfinite(metrics.epoch_losses[0])
        assert not np.array_equal(before.visual.prompts[0], banks.visual.prompts[0])
        assert 0.0 <= metrics.base_acc <= 100.0
        assert set(metrics.zero_shot) == {"base", "new"}

    def test_deterministic(self, model, task, banks):
        first, second = banks.copy(), banks.copy()
        a = train_prompts(model, task, first, FAST, AttentionMode.DASR)
        b = train_prompts(model, task, second, FAST, AttentionMode.DASR)
        assert a.epoch_losses == b.epoch_losses
        assert_array_equal(first.textual.prompts[0], second.textual.prompts[0])

    def test_accuracy_trace_every_epoch(self, model, task, banks):
        config = replace(FAST, epochs=3)
        metrics = train_prompts(model, task, banks, config, "da")
        assert len(metrics.accuracy_trace) == config.epochs
        assert [t["epoch"] for t in metrics.accuracy_trace] == [1, 2, 3]
        assert len(metrics.epoch_lr) == config.epochs and set(metrics.epoch_lr[0]) == {"visual", "textual"}
        last = metrics.accuracy_trace[-1]
        assert (metrics.base_acc, metrics.new_acc) == (last["base"], last["new"])
        assert (metrics.base_acc, metrics.new_acc) == evaluate(model, task, banks, "da", config)

    def test_one_gradient_sweep_per_step(self, model, task, banks, monkeypatch):
        calls = []
        original = GradTape.gradient

        def counting(tape, output, sources):
            calls.append(len(sources))
            return original(tape, output, sources)

        monkeypatch.setattr(GradTape, "gradient", counting)
        train_prompts(model, task, banks, FAST, AttentionMode.DASR)
        steps = math.ceil(FAST.shots * len(task.base_classes) / FAST.batch_size)
        assert calls == [banks.visual.depth + banks.textual.depth] * steps


class TestAblation:
    def test_resolve_cells(self):
        assert resolve_cells([]) == list(DEFAULT_LADDER)
        assert [c.name for c in resolve_cells(["MPL", "DPL"])] == ["MPL", "DPL"]
        custom = resolve_cells([{"name": "dare", "mode": "dare", "lctp": False}])[0]
        assert custom.mode is AttentionMode.DARE and not custom.lctp
        with pytest.raises(ConfigError):
            resolve_cells(["nope"])

    def test_grid_rows_and_medians(self, model, task, banks):
        cells = [AblationCell("A", "vanilla", False), AblationCell("B", "dasr", True)]
        rows = run_ablation_grid(cells, replace(FAST, epochs=0), [1, 2], lambda seed: (model, task, banks.copy()))
        assert [(r.cell, r.seed) for r in rows] == [("A", 1), ("A", 2), ("B", 1), ("B", 2)]
        medians = ladder_medians(rows)
        assert list(medians) == ["A", "B"]
        assert medians["A"] == rows[0].metrics.new_acc


# Median new-class accuracy that DPL must gain over MPL on the default config.
LADDER_MARGIN = 0.0


@pytest.mark.slow
def test_ladder_ordering():
    """Default ladder: median new accuracy never drops from one rung to the next."""
    from dprompt.main import build_backbone, make_banks
    from dprompt.reports import load_config

    config = load_config()
    assert len(config.grid.seeds) >= 5
    model, task = build_backbone(config)
    train = replace(config.train, eval_per_class=20)
    rows = run_ablation_grid(list(DEFAULT_LADDER), train, config.grid.seeds,
                             lambda seed: (model, task, make_banks(config, model, seed)))
    medians = ladder_medians(rows)
    assert list(medians) == ["MPL", "+DA", "+SR", "DPL"]
    assert medians["MPL"] <= medians["+DA"] <= medians["+SR"] <= medians["DPL"]
    assert medians["DPL"] > medians["MPL"] + LADDER_MARGIN
    zero_shot = {(r.seed, r.metrics.zero_shot["new"]) for r in rows}
    assert len(zero_shot) == len(config.grid.seeds)
