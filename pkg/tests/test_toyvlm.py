"""Tests for the toy dual encoder, the synthetic task and diagnostics."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from dprompt.attention import AttentionMode
from dprompt.errors import ConfigError, ShapeError, TemplateError
from dprompt.numerics import RngStream, Tensor2D, cross_entropy, grad_check, mul, sum_all
from dprompt.prompting import BoundBank, BoundPrompts, FlowPolicy, InitScheme, Modality, PromptBanks, build_bank
from dprompt.reports import load_config
from dprompt.trainer import evaluate
from dprompt.toyvlm import (
    DualEncoder, EncoderConfig, EncoderTrace, PretrainConfig, PromptedModel, SyntheticTask, TaskConfig,
    attention_map_distance, hf_ratio_by_layer, pretrain_backbone,
)


class TestConfigs:
    def test_heads_must_divide_dim(self):
        with pytest.raises(ConfigError):
            EncoderConfig(model_dim=10, num_heads=3)

    def test_mask_policy(self):
        with pytest.raises(ConfigError):
            EncoderConfig(mask_policy="sliding")

    def test_odd_class_count(self):
        with pytest.raises(ConfigError):
            TaskConfig(num_classes=5)


class TestSyntheticTask:
    def test_splits_are_disjoint_halves(self, task):
        assert set(task.base_classes).isdisjoint(task.new_classes)
        assert sorted(task.base_classes + task.new_classes) == list(range(4))

    def test_deterministic_and_snapshot(self, task):
        clone = SyntheticTask.from_snapshot(task.snapshot())
        assert clone.base_classes == task.base_classes
        assert_array_equal(clone.sample(1, 3, "test"), task.sample(1, 3, "test"))
        assert not np.array_equal(task.sample(1, 3, "test"), task.sample(1, 4, "test"))

    def test_prototypes_are_unit_norm(self, task):
        assert_allclose(np.linalg.norm(task.prototypes, axis=1), 1.0, atol=1e-12)

    def test_few_shot_labels(self, task):
        data = task.few_shot(2)
        assert len(data) == 4
        assert [label for _, label in data] == [0, 0, 1, 1]


class TestDualEncoder:
    def test_zero_shot_is_mode_independent(self, model, image):
        reference = model.encode_image(image, None, AttentionMode.VANILLA_CONCAT).value
        for mode in AttentionMode:
            assert_array_equal(model.encode_image(image, None, mode).value, reference)

    @pytest.mark.parametrize("mode", [AttentionMode.DA, AttentionMode.DASR])
    def test_sigma_zero_recovers_zero_shot(self, model, banks, image, mode):
        zero_shot = model.encode_image(image, None, mode).value
        assert_array_equal(model.encode_image(image, banks, mode, sigma=0.0).value, zero_shot)

    @pytest.mark.parametrize("mode", list(AttentionMode))
    def test_embeddings_are_unit_norm(self, model, banks, image, mode):
        img = model.encode_image(image, banks, mode).value
        txt = model.encode_text("cat", "a photo of a [CLS].", banks, mode).value
        assert img.shape == (1, 8)
        assert abs(np.linalg.norm(img) - 1.0) < 1e-12
        assert abs(np.linalg.norm(txt) - 1.0) < 1e-12

    def test_empty_or_misshaped_image(self, model):
        with pytest.raises(ShapeError):
            model.encode_image(np.zeros((0, 4)))
        with pytest.raises(ShapeError):
            model.encode_image(np.zeros((2, 4)))

    def test_template_needs_one_slot(self, model):
        with pytest.raises(TemplateError):
            model.encode_text("cat", "a photo of a cat.")

    def test_classify_is_scaled_cosine(self, model, task, image):
        image_emb = model.encode_image(image)
        classes = model.class_embeddings(task.class_names, "a photo of a [CLS].")
        logits = model.classify(image_emb, classes)
        assert logits.shape == (1, 4)
        assert_allclose(logits.value, 100.0 * image_emb.value @ classes.value.T, atol=1e-10)
        assert np.abs(logits.value).max() <= 100.0 + 1e-9
        assert_allclose(model.classify(image_emb, classes, logit_scale=2.0).value, logits.value / 50.0, atol=1e-12)

    def test_checksum_tracks_weights(self, model):
        before = model.backbone_checksum()
        assert model.backbone_checksum() == before
        weights = model.weights
        weights["visual.cls"] = weights["visual.cls"] + 1.0
        model.set_weights(weights)
        assert model.backbone_checksum() != before

    def test_phrase_embedding_rows(self, model):
        assert model.embed_phrase("a photo of a").shape == (4, 8)

    def test_end_to_end_prompt_gradient(self, model, image, rng):
        target = Tensor2D(rng.child("target").normal(1, 8))

        def loss(p):
            bank = BoundBank(Modality.VISUAL, 1, 2, FlowPolicy.DISCARD, (p,))
            return sum_all(mul(model.encode_image(image, BoundPrompts(visual=bank), AttentionMode.DASR), target))

        assert grad_check(loss, rng.child("p").normal(2, 8, std=0.5), 1e-5) < 1e-5

    @pytest.mark.parametrize("modality", ["visual", "textual"])
    @pytest.mark.parametrize("mode", list(AttentionMode))
    def test_classification_loss_gradient(self, model, task, image, rng, mode, modality):
        fixed = {name: rng.child("fixed", name).tensor(1, 8, std=0.5) for name in ("visual", "textual")}
        names = task.names(task.base_classes)

        def loss(p):
            bound = BoundPrompts(**{
                name: BoundBank(Modality.parse(name), 1, 1, FlowPolicy.DISCARD,
                                (p if name == modality else fixed[name],))
                for name in fixed})
            logits = model.classify(model.encode_image(image, bound, mode),
                                    model.class_embeddings(names, "a photo of a [CLS].", bound, mode),
                                    logit_scale=1.0)
            return cross_entropy(logits, [0])

        assert grad_check(loss, rng.child("p").tensor(1, 8, std=0.5), 1e-5) < 1e-5

    def test_pretrain_config_validation(self):
        with pytest.raises(ConfigError):
            PretrainConfig(logit_scale=0.0)
        with pytest.raises(ConfigError):
            PretrainConfig(clip_norm=-1.0)

    def test_pretraining_updates_backbone(self, model, task):
        before = model.backbone_checksum()
        losses = pretrain_backbone(model, task, PretrainConfig(steps=2, batch_classes=2))
        assert len(losses) == 2 and all(np.isfinite(losses))
        assert model.backbone_checksum() != before


@pytest.fixture(scope="module")
def default_backbone():
    config = load_config()
    task = SyntheticTask(config.task)
    model = DualEncoder.build(config.model, task, RngStream(config.task.seed).child("backbone"),
                              extra_texts=[config.train.template, config.train.bare_template])
    losses = pretrain_backbone(model, task, config.pretrain)
    return config, model, task, losses


class TestDefaultBackbone:
    def test_pretraining_loss_drops_below_uniform(self, default_backbone):
        config, _, _, losses = default_backbone
        assert len(losses) == config.pretrain.steps
        assert np.mean(losses[-20:]) < np.log(config.pretrain.batch_classes)
        assert np.mean(losses[-20:]) < np.mean(losses[:20])

    def test_image_embeddings_stay_spread(self, default_backbone):
        _, model, task, _ = default_backbone
        embeddings = np.vstack([model.encode_image(patches).value for patches, _ in task.eval_set("base", 2)])
        assert embeddings.std(axis=0).max() > 1e-2

    def test_zero_shot_beats_chance(self, default_backbone):
        config, model, task, _ = default_backbone
        base, _ = evaluate(model, task, None, AttentionMode.DASR, config.train)
        assert base > 100.0 / len(task.base_classes)


class TestDiagnostics:
    def test_self_distance_is_zero(self, model, banks, task):
        images = [task.sample(c, 0, "test") for c in range(2)]
        prompted = PromptedModel(model, banks, AttentionMode.DA)
        assert all(d == 0.0 for d in attention_map_distance(prompted, prompted, images).values())

    def test_decoupled_first_layer_matches_zero_shot(self, model, banks, task):
        images = [task.sample(c, 0, "test") for c in range(2)]
        zero_shot = PromptedModel(model, None, AttentionMode.DA)
        da = attention_map_distance(PromptedModel(model, banks, AttentionMode.DA), zero_shot, images)
        assert da[1] == 0.0
        silenced = attention_map_distance(PromptedModel(model, banks, AttentionMode.DA, sigma=0.0),
                                          zero_shot, images)
        assert all(d == 0.0 for d in silenced.values())
        vanilla = attention_map_distance(PromptedModel(model, banks, AttentionMode.VANILLA_CONCAT),
                                         zero_shot, images)
        assert vanilla[1] > 0.0

    def test_mismatched_patch_counts(self, model):
        prompted = PromptedModel(model)
        with pytest.raises(ShapeError):
            attention_map_distance(prompted, prompted, [np.zeros((3, 4)), np.zeros((2, 4))])

    def test_trace_and_hf_ratio(self, model, banks, image):
        trace = EncoderTrace()
        model.encode_image(image, banks, AttentionMode.DA, trace=trace)
        assert sorted(trace.probes) == [1, 2]
        assert trace.probes[1].instance_map.shape == (2, 4, 4)
        assert trace.prompt_inputs[2] is None
        ratios = hf_ratio_by_layer(PromptedModel(model, banks, AttentionMode.DA), image)
        assert list(ratios) == [1]
        assert (ratios[1] > 0).all()

    def test_propagated_prompts_reach_every_layer(self, model, image, rng):
        bank = build_bank("visual", 1, 2, 8, InitScheme(), rng, 2, flow_policy="propagate")
        trace = EncoderTrace()
        model.encode_image(image, PromptBanks(visual=bank), AttentionMode.DASR, trace=trace)
        assert trace.prompt_inputs[2] is not None
