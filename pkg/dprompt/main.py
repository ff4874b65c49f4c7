#!/usr/bin/env python3
"""
dprompt - Main Entry Point

Command-line interface for verification, prompt training, parameter
accounting and attention diagnostics.

    python -m dprompt.main verify [--inject-fault sigma]
    python -m dprompt.main train [--config FILE] [--seed N] [--mode NAME] [--out DIR]
    python -m dprompt.main params
    python -m dprompt.main diagnose
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from dotenv import load_dotenv

from .attention import AttentionMode
from .errors import BankFormatError, ConfigError, DPromptError, TrainingDivergedError, VerificationError
from .numerics import RngStream
from .prompting import (
    Modality, PromptBank, PromptBanks, build_bank, count_parameters, format_thousands,
    load_bank, save_bank,
)
from .reports import DEFAULTS_PATH, ExperimentConfig, ReportBundle, load_config
from .toyvlm import (
    DualEncoder, PromptedModel, SyntheticTask, attention_map_distance, hf_ratio_by_layer,
    pretrain_backbone, uniform_logit_ratio,
)
from .trainer import evaluate, ladder_medians, resolve_cells, run_ablation_grid, train_prompts
from .verify import FAULTS, run_verification

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

COMMANDS = ("verify", "train", "params", "diagnose")


def banner(title: str) -> None:
    print("\n" + "=" * 50)
    print(title)
    print("=" * 50)


# building blocks

def build_backbone(config: ExperimentConfig) -> Tuple[DualEncoder, SyntheticTask]:
    """Synthetic task plus a pre-trained, frozen dual encoder."""
    task = SyntheticTask(config.task)
    rng = RngStream(config.task.seed).child("backbone")
    model = DualEncoder.build(config.model, task, rng,
                              extra_texts=[config.train.template, config.train.bare_template])
    losses = pretrain_backbone(model, task, config.pretrain)
    if losses:
        logger.info("Backbone pre-training loss %.4f -> %.4f", losses[0], losses[-1])
    return model, task


def make_banks(config: ExperimentConfig, model: DualEncoder, seed: int) -> PromptBanks:
    """Freshly initialised banks for the enabled modalities."""
    rng = RngStream(seed).child("banks")
    init = config.prompts.init_scheme()
    banks = PromptBanks()
    for name, encoder_cfg in (("visual", config.model.visual), ("textual", config.model.textual)):
        bank_cfg = getattr(config.prompts, name)
        if not bank_cfg.enabled:
            continue
        bank = build_bank(name, bank_cfg.depth, bank_cfg.length, encoder_cfg.model_dim, init, rng,
                          encoder_cfg.num_layers, phrase_embedder=model.embed_phrase,
                          flow_policy=bank_cfg.flow_policy)
        setattr(banks, name, bank)
    return banks


def attention_mode(config: ExperimentConfig) -> AttentionMode:
    return AttentionMode.parse(config.model.visual.attention_mode)


# commands

def cmd_verify(config: ExperimentConfig, bundle: ReportBundle, fault: Optional[str]) -> int:
    banner("🧪 VERIFICATION")
    if fault:
        print(f"\n   ⚠️  Injecting fault: {fault}")
    results = run_verification(config.verify, fault)
    for r in results:
        mark = "✅" if r.passed else "❌"
        print(f"   {mark} {r.name}: {r.value:.3g} (limit {r.limit:g}) {r.detail}".rstrip())
        bundle.add_record("check", **r.to_record())
    bundle.add_table("checks", ["check", "passed", "value", "limit"],
                     [[r.name, r.passed, r.value, r.limit] for r in results])
    failed = [r.name for r in results if not r.passed]
    bundle.add_section("Verification", [f"- {len(results) - len(failed)}/{len(results)} checks passed"]
                       + [f"- FAILED: {name}" for name in failed])
    if failed:
        print(f"\n   ❌ {len(failed)} check(s) failed: {', '.join(failed)}")
        return EXIT_FAILED
    print(f"\n   ✅ All {len(results)} checks passed")
    return EXIT_OK


def cmd_train(config: ExperimentConfig, bundle: ReportBundle, out_dir: Path) -> int:
    banner("🏗️  STAGE 1: BACKBONE")
    print("\n   Building task and pre-training backbone...")
    model, task = build_backbone(config)
    print(f"   ✅ Backbone ready ({config.pretrain.steps} pre-training steps, "
          f"checksum {model.backbone_checksum()[:12]})")

    mode = attention_mode(config)
    if not config.grid.cells:
        banner("🎯 STAGE 2: PROMPT TRAINING")
        banks = make_banks(config, model, config.train.seed)
        print(f"\n   Mode: {mode.value}, prompt parameters: {banks.parameter_count}")
        metrics = train_prompts(model, task, banks, config.train, mode,
                                config.prompts.sigma, config.prompts.beta)
        print(f"   ✅ base={metrics.base_acc:.2f} new={metrics.new_acc:.2f} H={metrics.harmonic_mean:.2f}")
        for name, bank in banks.items():
            save_bank(bank, out_dir / "banks" / f"{name}.dpb")
        for trace, loss, lrs in zip(metrics.accuracy_trace, metrics.epoch_losses, metrics.epoch_lr):
            bundle.add_record("epoch", epoch=trace["epoch"], loss=loss, base=trace["base"],
                              new=trace["new"], **{f"lr_{name}": lr for name, lr in lrs.items()})
        bundle.add_record("summary", mode=mode.value, base=metrics.base_acc, new=metrics.new_acc,
                          h=metrics.harmonic_mean, params=metrics.parameter_count,
                          zero_shot=metrics.zero_shot, epochs=len(metrics.epoch_losses))
        bundle.add_table("accuracy", ["stage", "base", "new", "h"], [
            ["zero-shot", metrics.zero_shot["base"], metrics.zero_shot["new"], None],
            ["trained", metrics.base_acc, metrics.new_acc, metrics.harmonic_mean],
        ])
        bundle.add_table("accuracy_trace", ["epoch", "loss", "base", "new"],
                         [[t["epoch"], loss, t["base"], t["new"]]
                          for t, loss in zip(metrics.accuracy_trace, metrics.epoch_losses)])
        bundle.add_section("Run", [f"- Mode: `{mode.value}`",
                                   f"- Prompt parameters: {metrics.parameter_count}",
                                   f"- Epoch losses: {', '.join(f'{l:.4f}' for l in metrics.epoch_losses)}"])
        return EXIT_OK

    banner("🧮 STAGE 2: ABLATION GRID")
    cells = resolve_cells(config.grid.cells)
    print(f"\n   {len(cells)} cells x {len(config.grid.seeds)} seeds")

    def setup(seed: int):
        return model, task, make_banks(config, model, seed)

    rows = run_ablation_grid(cells, config.train, config.grid.seeds, setup)
    for row in rows:
        bundle.add_record("ablation", **row.to_record())
    bundle.add_table("ablation", ["cell", "mode", "lctp", "seed", "base", "new", "h"],
                     [[r.cell, r.mode, r.lctp, r.seed, r.metrics.base_acc, r.metrics.new_acc,
                       r.metrics.harmonic_mean] for r in rows])
    medians = ladder_medians(rows)
    bundle.add_table("ladder", ["cell", "median_new"], [[c, v] for c, v in medians.items()])
    for cell, value in medians.items():
        print(f"   ✅ {cell}: median new accuracy {value:.2f}")
    return EXIT_OK


def _zero_bank(modality: str, dims: Sequence[int]) -> PromptBank:
    depth, length, dim = dims
    return PromptBank(Modality.parse(modality), depth, length, dim,
                      [np.zeros((length, dim)) for _ in range(depth)])


def cmd_params(config: ExperimentConfig, bundle: ReportBundle) -> int:
    banner("🔢 PARAMETER ACCOUNTING")
    rows = []
    presets = dict(config.accounting.presets)
    presets["configured"] = {
        name: [getattr(config.prompts, name).depth, getattr(config.prompts, name).length,
               getattr(config.model, name).model_dim]
        for name in ("visual", "textual") if getattr(config.prompts, name).enabled
    }
    for name, preset in presets.items():
        banks = {m: _zero_bank(m, dims) for m, dims in preset.items() if dims}
        visual = banks["visual"].parameter_count if "visual" in banks else 0
        textual = banks["textual"].parameter_count if "textual" in banks else 0
        total = count_parameters(banks.values())
        rows.append([name, visual, textual, total, format_thousands(total)])
        print(f"   ✅ {name}: visual={visual} textual={textual} total={total} ({format_thousands(total)})")
        bundle.add_record("params", preset=name, visual=visual, textual=textual, total=total,
                          rounded=format_thousands(total))
    bundle.add_table("parameters", ["preset", "visual", "textual", "total", "rounded"], rows)
    return EXIT_OK


def _load_banks(bank_dir: str) -> PromptBanks:
    path = Path(bank_dir)
    if not path.is_dir():
        raise ConfigError(f"diagnose.bank_dir does not exist: {path}", keys=["diagnose.bank_dir"])
    banks = PromptBanks()
    for name in ("visual", "textual"):
        file = path / f"{name}.dpb"
        if file.exists():
            setattr(banks, name, load_bank(file))
    return banks


def cmd_diagnose(config: ExperimentConfig, bundle: ReportBundle) -> int:
    banner("🔍 STAGE 1: BACKBONE")
    model, task = build_backbone(config)
    if config.diagnose.bank_dir:
        banks = _load_banks(config.diagnose.bank_dir)
        print(f"   ✅ Loaded banks from {config.diagnose.bank_dir}")
    else:
        banks = make_banks(config, model, config.train.seed)
        print("   ⚠️  No bank_dir given; using freshly initialised prompts")

    images = [patches for patches, _ in task.eval_set("base", config.diagnose.images)][:config.diagnose.images]
    zero_shot = PromptedModel(model, None, attention_mode(config))

    banner("📐 STAGE 2: ATTENTION DIAGNOSTICS")
    rows = []
    for mode in AttentionMode:
        prompted = PromptedModel(model, banks, mode, config.prompts.sigma, config.prompts.beta)
        distances = attention_map_distance(prompted, zero_shot, images)
        ratios = {}
        for patches in images:
            for layer, ratio in hf_ratio_by_layer(prompted, patches).items():
                ratios.setdefault(layer, []).append(float(ratio.mean()))
        for layer, distance in distances.items():
            mean_ratio = float(np.mean(ratios[layer])) if layer in ratios else None
            rows.append([mode.value, layer, distance, mean_ratio])
        print(f"   ✅ {mode.value}: map distance by layer "
              + ", ".join(f"{l}:{d:.4f}" for l, d in distances.items()))
    bundle.add_table("diagnostics", ["mode", "layer", "map_distance", "mean_hf_ratio"], rows)
    for row in rows:
        bundle.add_record("diagnostic", mode=row[0], layer=row[1], map_distance=row[2], mean_hf_ratio=row[3])

    uniform = uniform_logit_ratio(8, 2, 8, 2, RngStream(config.verify.seed))
    uniform_ok = bool(np.allclose(uniform, 2 / 8, rtol=0, atol=1e-12))
    print(f"   {'✅' if uniform_ok else '❌'} uniform logits: ratio {uniform.mean():.6f} (expected {2 / 8})")
    bundle.add_record("uniform_logits", ratio=float(uniform.mean()), expected=2 / 8, passed=uniform_ok)

    banner("📈 STAGE 3: ACCURACY TRACE")
    metrics = train_prompts(model, task, make_banks(config, model, config.train.seed),
                            config.train, attention_mode(config))
    bundle.add_table("accuracy_trace", ["epoch", "base", "new"],
                     [[t["epoch"], t["base"], t["new"]] for t in metrics.accuracy_trace])
    print(f"   ✅ Traced {len(metrics.accuracy_trace)} epochs")
    base, new = evaluate(model, task, banks, attention_mode(config), config.train,
                         config.prompts.sigma, config.prompts.beta)
    bundle.add_section("Diagnose", [f"- Accuracy with these banks: base {base:.2f}, new {new:.2f}",
                                    f"- Uniform-logit check: {'passed' if uniform_ok else 'FAILED'}"])
    return EXIT_OK if uniform_ok else EXIT_FAILED


# entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dprompt", description="Decoupled prompt attention toolkit")
    parser.add_argument("command", nargs="?", choices=COMMANDS, help="What to run")
    parser.add_argument("--config", type=str, default=None, help="YAML file merged over the defaults")
    parser.add_argument("--seed", type=int, default=None, help="Training seed (train.seed)")
    parser.add_argument("--out", type=str, default=None, help="Output directory")
    parser.add_argument("--mode", type=str, default=None,
                        help="Attention mode for both encoders: vanilla, exact, da, dasr, dare")
    parser.add_argument("--print-defaults", action="store_true", help="Print the default config and exit")
    parser.add_argument("--inject-fault", choices=FAULTS, default=None,
                        help="verify only: inject a named fault")
    return parser


def cli_overrides(args: argparse.Namespace) -> Dict:
    overrides: Dict = {}
    if args.seed is not None:
        overrides.setdefault("train", {})["seed"] = args.seed
    if args.mode is not None:
        mode = AttentionMode.parse(args.mode).value
        overrides["model"] = {"visual": {"attention_mode": mode}, "textual": {"attention_mode": mode}}
    return overrides


def resolve_out_dir(args: argparse.Namespace, config: ExperimentConfig) -> Path:
    return Path(args.out or os.getenv("DPROMPT_OUT_DIR") or config.output.dir or "runs/latest")


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)

    if args.print_defaults:
        print(DEFAULTS_PATH.read_text())
        return EXIT_OK
    if args.command is None:
        print("❌ Error: a command is required (verify, train, params, diagnose)")
        return EXIT_CONFIG

    print(f"🚀 dprompt {args.command}")
    print("\n📋 Loading configuration...")
    try:
        config = load_config(args.config, cli_overrides(args))
    except ConfigError as e:
        print(f"   ❌ {e}")
        return EXIT_CONFIG
    print("   ✅ Config loaded")

    logging.basicConfig(level=getattr(logging, config.output.log_level.upper()),
                        format="%(levelname)s %(name)s: %(message)s")
    out_dir = resolve_out_dir(args, config)
    bundle = ReportBundle(args.command, config)

    try:
        if args.command == "verify":
            code = cmd_verify(config, bundle, args.inject_fault)
        elif args.command == "train":
            code = cmd_train(config, bundle, out_dir)
        elif args.command == "params":
            code = cmd_params(config, bundle)
        else:
            code = cmd_diagnose(config, bundle)
    except (ConfigError, BankFormatError) as e:
        print(f"\n   ❌ {e}")
        return EXIT_CONFIG
    except (TrainingDivergedError, VerificationError) as e:
        print(f"\n   ❌ {e}")
        if getattr(e, "trace", None):
            print(f"   Trace: {e.trace}")
        return EXIT_FAILED
    except DPromptError as e:
        print(f"\n   ❌ {e}")
        return EXIT_FAILED

    summary = bundle.write(out_dir)
    banner("✨ COMPLETE" if code == EXIT_OK else "⚠️  COMPLETED WITH FAILURES")
    print(f"\n📄 Report: {summary}")
    return code


if __name__ == "__main__":
    sys.exit(main())
