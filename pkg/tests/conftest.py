"""Shared fixtures: tiny models and tasks that keep the suite fast."""

import os

import numpy as np
import pytest
import yaml

from dprompt.numerics import RngStream
from dprompt.prompting import InitScheme, PromptBanks, build_bank
from dprompt.toyvlm import DualEncoder, EncoderConfig, ModelConfig, SyntheticTask, TaskConfig


def pytest_collection_modifyitems(config, items):
    if os.getenv("DPROMPT_RUN_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set DPROMPT_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


# Minimal experiment used by CLI tests (merged over the packaged defaults)
TINY_CONFIG = {
    "model": {
        "visual": {"num_layers": 2, "model_dim": 8, "num_heads": 2, "mlp_hidden_dim": 16},
        "textual": {"num_layers": 2, "model_dim": 8, "num_heads": 2, "mlp_hidden_dim": 16},
        "embed_dim": 8,
    },
    "prompts": {"visual": {"depth": 1, "length": 1}, "textual": {"depth": 1, "length": 1}},
    "task": {"num_classes": 4, "num_patches": 3, "patch_dim": 4},
    "train": {"epochs": 1, "shots": 1, "batch_size": 2, "eval_per_class": 1},
    "pretrain": {"steps": 2, "batch_classes": 2},
    "diagnose": {"images": 1},
    "verify": {"trials": 5},
}


@pytest.fixture
def rng():
    return RngStream(1234)


@pytest.fixture
def tiny_config_file(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY_CONFIG))
    return path


@pytest.fixture
def model_config():
    return ModelConfig(
        visual=EncoderConfig(num_layers=2, model_dim=8, num_heads=2, mlp_hidden_dim=16, attention_mode="da"),
        textual=EncoderConfig(num_layers=2, model_dim=8, num_heads=2, mlp_hidden_dim=16,
                              attention_mode="da"),
        embed_dim=8,
    )


@pytest.fixture
def task():
    return SyntheticTask(TaskConfig(num_classes=4, num_patches=3, patch_dim=4, seed=3))


@pytest.fixture
def model(model_config, task):
    return DualEncoder.build(model_config, task, RngStream(5))


@pytest.fixture
def banks(model):
    rng = RngStream(9)
    return PromptBanks(
        visual=build_bank("visual", 1, 2, 8, InitScheme(), rng, 2),
        textual=build_bank("textual", 1, 2, 8, InitScheme(), rng, 2, phrase_embedder=model.embed_phrase),
    )


@pytest.fixture
def image(task):
    return task.sample(task.base_classes[0], 0, "test")
