"""
Invariant checks behind `dprompt verify`.

Every check returns a CheckResult; the CLI prints them and exits 1 when
any failed. A fault can be injected to show what a failure looks like.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .attention import (
    AttentionMode, AttentionProbe, AttentionWeights, decompose, prompt_attention_forward,
)
from .errors import ConfigError
from .numerics import RngStream, Tensor2D, add, cross_entropy, grad_check, mul, sum_all
from .prompting import BoundBank, BoundPrompts, FlowPolicy, Modality
from .toyvlm import (
    DualEncoder, EncoderConfig, EncoderTrace, ModelConfig, SyntheticTask, TaskConfig,
    TransformerEncoder, uniform_logit_ratio,
)

logger = logging.getLogger(__name__)

FAULTS = ("sigma",)


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float
    detail: str = ""

    def to_record(self) -> dict:
        return {"check": self.name, "passed": self.passed, "value": self.value,
                "limit": self.limit, "detail": self.detail}


HEAD_CHOICES = (1, 2, 4)
DIM_CHOICES = (4, 8, 16)


def _case(rng: RngStream, trial: int):
    """Random layer with N in [2, 32], M in [1, 8], heads in {1, 2, 4}, D in {4, 8, 16}."""
    r = rng.child("case", trial)
    heads = HEAD_CHOICES[int(r.integers(0, len(HEAD_CHOICES)))]
    dim = DIM_CHOICES[int(r.integers(0, len(DIM_CHOICES)))]
    n = int(r.integers(2, 33))
    m = int(r.integers(1, 9))
    w = AttentionWeights.random(dim, heads, r.child("w"))
    return r.child("x").tensor(n, dim), r.child("p").tensor(m, dim), w


def check_oracle_equivalence(config, rng: RngStream) -> List[CheckResult]:
    worst_exact = worst_recombined = 0.0
    for trial in range(config.trials):
        x, p, w = _case(rng, trial)
        vx, vp, _ = prompt_attention_forward(x, p, w, AttentionMode.VANILLA_CONCAT, with_report=False)
        ex, ep, report = prompt_attention_forward(x, p, w, AttentionMode.EXACT_DECOMPOSED)
        worst_exact = max(worst_exact, np.abs(ex.value - vx.value).max(), np.abs(ep.value - vp.value).max())
        worst_recombined = max(worst_recombined,
                               np.abs(report.recombined_instances() - vx.value).max(),
                               np.abs(report.recombined_prompts() - vp.value).max())
    tol = config.tolerance
    return [
        CheckResult("oracle_equivalence", worst_exact < tol, float(worst_exact), tol,
                    f"exact vs vanilla over {config.trials} draws"),
        CheckResult("decomposition_recombination", worst_recombined < tol, float(worst_recombined), tol,
                    "f*A(X,X)+h*A(X,P) and f_p*A(P,P)+h_p*A(P,X) vs vanilla"),
    ]


def check_coefficients(config, rng: RngStream) -> List[CheckResult]:
    worst_sum = worst_ratio = 0.0
    for trial in range(config.trials):
        x, p, w = _case(rng, trial)
        report = decompose(x, p, w)
        worst_sum = max(worst_sum, np.abs(report.f + report.h - 1.0).max(),
                        np.abs(report.f_p + report.h_p - 1.0).max())
        worst_ratio = max(worst_ratio, np.abs(report.hf_ratio - report.h / report.f).max()
                          / max(1.0, np.abs(report.hf_ratio).max()))
    uniform = uniform_logit_ratio(7, 3, 8, 2, rng.child("uniform"))
    uniform_err = float(np.abs(uniform - 3 / 7).max())
    return [
        CheckResult("f_plus_h", worst_sum < 1e-12, float(worst_sum), 1e-12),
        CheckResult("hf_ratio", worst_ratio < 1e-10, float(worst_ratio), 1e-10, "ratio equals h/f"),
        CheckResult("uniform_logits", uniform_err < 1e-12, uniform_err, 1e-12, "Wk = 0 gives M/N"),
    ]


def check_formulas(config, rng: RngStream, fault: Optional[str] = None) -> List[CheckResult]:
    """DA / DASR / DARE outputs against their closed forms built from the sub-attentions."""
    worst = {"da": 0.0, "dasr": 0.0, "dare": 0.0}
    for trial in range(config.trials):
        x, p, w = _case(rng, trial)
        n, m = x.rows, p.rows
        sigma, beta = m / n, m / (m + n)
        report = decompose(x, p, w)
        expected_x = report.a_xx + sigma * report.a_xp
        expected_p = beta * report.a_pp + (1 - beta) * report.a_px
        applied = 2.0 * sigma if fault == "sigma" else None

        dx, dp, _ = prompt_attention_forward(x, p, w, AttentionMode.DA, sigma=applied, with_report=False)
        worst["da"] = max(worst["da"], np.abs(dx.value - expected_x).max(), np.abs(dp.value - expected_p).max())

        sx, sp, _ = prompt_attention_forward(x, p, w, AttentionMode.DASR, sigma=applied, with_report=False)
        worst["dasr"] = max(worst["dasr"], np.abs(sx.value - expected_x).max(),
                            np.abs(sp.value - report.a_px).max())

        rx, rp, _ = prompt_attention_forward(x, p, w, AttentionMode.DARE, with_report=False)
        ex, _, _ = prompt_attention_forward(x, p, w, AttentionMode.EXACT_DECOMPOSED, with_report=False)
        worst["dare"] = max(worst["dare"], np.abs(rx.value - ex.value).max(), np.abs(rp.value - expected_p).max())
    tol = config.tolerance
    return [CheckResult(f"{name}_formula", err < tol, float(err), tol) for name, err in worst.items()]


def _bank(rng: RngStream, depth: int, length: int, dim: int, flow: FlowPolicy) -> BoundBank:
    tensors = tuple(rng.child("prompt", i).tensor(length, dim) for i in range(depth))
    return BoundBank(Modality.VISUAL, depth, length, flow, tensors)


def check_decoupling(config, rng: RngStream) -> List[CheckResult]:
    """
    In DA/DASR every layer's instance attention map equals plain
    self-attention over that layer's input, for both flow policies.
    """
    cfg = EncoderConfig(num_layers=4, model_dim=8, num_heads=2, mlp_hidden_dim=16)
    encoder = TransformerEncoder("decoupling", cfg, embed_dim=8)
    params = {k: Tensor2D(v) for k, v in encoder.init_weights(rng.child("encoder")).items()}
    tokens = rng.child("tokens").tensor(5, 8)
    failures = []
    for mode in (AttentionMode.DA, AttentionMode.DASR):
        for flow in (FlowPolicy.DISCARD, FlowPolicy.PROPAGATE):
            traces = []
            for variant in ("a", "b"):
                trace = EncoderTrace()
                encoder.forward(tokens, params, _bank(rng.child(variant), 2, 3, 8, flow), mode, trace=trace)
                traces.append(trace)
                for layer, probe in trace.probes.items():
                    plain = AttentionProbe()
                    prompt_attention_forward(Tensor2D(trace.attention_inputs[layer]), None,
                                             encoder.attention_weights(params, layer), mode, probe=plain)
                    if not np.array_equal(plain.instance_map, probe.instance_map):
                        failures.append(f"{mode.value}/{flow.value}/layer{layer}")
            # identical layer inputs must give identical maps whatever the prompt values
            if not np.array_equal(traces[0].probes[1].instance_map, traces[1].probes[1].instance_map):
                failures.append(f"{mode.value}/{flow.value}/prompt-values")
    return [CheckResult("decoupling", not failures, float(len(failures)), 0.0, ", ".join(failures))]


def check_zero_shot_recovery(config, rng: RngStream) -> List[CheckResult]:
    cfg = EncoderConfig(num_layers=3, model_dim=8, num_heads=2, mlp_hidden_dim=16)
    encoder = TransformerEncoder("zs", cfg, embed_dim=8)
    params = {k: Tensor2D(v) for k, v in encoder.init_weights(rng.child("encoder")).items()}
    tokens = rng.child("tokens").tensor(5, 8)
    reference = encoder.forward(tokens, params, None, AttentionMode.VANILLA_CONCAT).value
    mismatched = []
    for mode in AttentionMode:
        if not np.array_equal(encoder.forward(tokens, params, None, mode).value, reference):
            mismatched.append(mode.value)
    bank = _bank(rng.child("bank"), 2, 3, 8, FlowPolicy.DISCARD)
    for mode in (AttentionMode.DA, AttentionMode.DASR):
        out = encoder.forward(tokens, params, bank, mode, sigma=0.0).value
        if not np.array_equal(out, reference):
            mismatched.append(f"{mode.value}(sigma=0)")
    return [CheckResult("zero_shot_recovery", not mismatched, float(len(mismatched)), 0.0,
                        ", ".join(mismatched))]


GRADIENT_SOURCES = ("p", "x", "wq", "wk", "wv")


def _layer_loss(x, p, w, mode, rx, rp):
    xo, po, _ = prompt_attention_forward(x, p, w, mode, with_report=False)
    return add(sum_all(mul(xo, rx)), sum_all(mul(po, rp)))


def layer_gradient_error(x: Tensor2D, p: Tensor2D, w: AttentionWeights, mode, source: str,
                         rng: RngStream, eps: float) -> float:
    """grad_check of a random linear readout of one attention layer w.r.t. one input."""
    rx = Tensor2D(rng.child("rx").normal(x.rows, x.cols))
    rp = Tensor2D(rng.child("rp").normal(p.rows, p.cols))
    if source == "p":
        return grad_check(lambda t: _layer_loss(x, t, w, mode, rx, rp), p, eps)
    if source == "x":
        return grad_check(lambda t: _layer_loss(t, p, w, mode, rx, rp), x, eps)
    return grad_check(lambda t: _layer_loss(x, p, w.with_matrix(source, t), mode, rx, rp),
                      getattr(w, source), eps)


def _chain_model(rng: RngStream):
    task = SyntheticTask(TaskConfig(num_classes=4, num_patches=2, patch_dim=4, seed=0))
    enc = EncoderConfig(num_layers=2, model_dim=4, num_heads=2, mlp_hidden_dim=8)
    model = DualEncoder.build(ModelConfig(visual=enc, textual=enc, embed_dim=4), task, rng.child("model"))
    return model, task


def classification_chain_error(model: DualEncoder, task: SyntheticTask, mode, modality: str,
                               rng: RngStream, eps: float, logit_scale: float = 1.0) -> float:
    """
    grad_check of encode -> classify -> cross-entropy w.r.t. the layer-1
    prompts of one modality; the other modality keeps a constant prompt.
    """
    dims = {"visual": model.config.visual.model_dim, "textual": model.config.textual.model_dim}
    fixed = {name: rng.child("fixed", name).tensor(1, dim, std=0.5) for name, dim in dims.items()}
    image = task.sample(task.base_classes[0], 0, "test")
    names = task.names(task.base_classes)

    def loss(p):
        banks = {name: BoundBank(Modality.parse(name), 1, 1, FlowPolicy.DISCARD,
                                 (p if name == modality else fixed[name],)) for name in dims}
        bound = BoundPrompts(**banks)
        logits = model.classify(model.encode_image(image, bound, mode),
                                model.class_embeddings(names, "a photo of a [CLS].", bound, mode),
                                logit_scale=logit_scale)
        return cross_entropy(logits, [0])

    return grad_check(loss, rng.child("p", modality).tensor(1, dims[modality], std=0.5), eps)


def check_gradients(config, rng: RngStream) -> List[CheckResult]:
    results = []
    x = rng.child("x").tensor(6, 4)
    p = rng.child("p").tensor(2, 4)
    w = AttentionWeights.random(4, 2, rng.child("w"))

    for mode in AttentionMode:
        errors = {source: layer_gradient_error(x, p, w, mode, source, rng.child("readout"), config.grad_eps)
                  for source in GRADIENT_SOURCES}
        worst = max(errors, key=errors.get)
        results.append(CheckResult(f"gradient_{mode.value}", errors[worst] < config.grad_tolerance,
                                   errors[worst], config.grad_tolerance,
                                   f"layer loss w.r.t. {', '.join(GRADIENT_SOURCES)}; worst {worst}"))

    cfg = EncoderConfig(num_layers=2, model_dim=4, num_heads=2, mlp_hidden_dim=8)
    encoder = TransformerEncoder("grad", cfg, embed_dim=4)
    weights = encoder.init_weights(rng.child("encoder"))
    params = {k: Tensor2D(v) for k, v in weights.items()}
    tokens = rng.child("tokens").tensor(4, 4)
    target = Tensor2D(rng.child("target").normal(1, 4))
    prompt = rng.child("p_e2e").tensor(2, 4)

    def end_to_end(p, mode=AttentionMode.DA, overrides=None):
        bank = BoundBank(Modality.VISUAL, 1, 2, FlowPolicy.DISCARD, (p,))
        return sum_all(mul(encoder.forward(tokens, {**params, **(overrides or {})}, bank, mode), target))

    err = grad_check(end_to_end, prompt, config.grad_eps)
    wo = encoder.name("wo", 1)
    for mode in AttentionMode:
        err = max(err, grad_check(lambda t, mode=mode: end_to_end(prompt, mode, {wo: t}),
                                  weights[wo], config.grad_eps))
    results.append(CheckResult("gradient_end_to_end", err < config.grad_tolerance, err,
                               config.grad_tolerance, "encoder embedding w.r.t. layer-1 prompts and wo"))

    model, task = _chain_model(rng.child("chain"))
    err = max(classification_chain_error(model, task, mode, modality, rng.child("chain", mode.value),
                                         config.grad_eps)
              for mode in AttentionMode for modality in ("visual", "textual"))
    results.append(CheckResult("gradient_classification", err < config.grad_tolerance, err,
                               config.grad_tolerance, "cross-entropy of classify() w.r.t. prompts"))
    return results


def run_verification(config, fault: Optional[str] = None) -> List[CheckResult]:
    """
    Run every check.

    Args:
        config: VerifyConfig
        fault: Optional fault to inject ("sigma" mis-sets the DA coefficient)

    Raises:
        ConfigError: If the fault name is unknown
    """
    if fault is not None and fault not in FAULTS:
        raise ConfigError(f"Unknown fault: {fault!r}. Must be one of: {', '.join(FAULTS)}")
    rng = RngStream(config.seed)
    suites: List[Callable[[], List[CheckResult]]] = [
        lambda: check_oracle_equivalence(config, rng.child("oracle")),
        lambda: check_coefficients(config, rng.child("coefficients")),
        lambda: check_formulas(config, rng.child("formulas"), fault),
        lambda: check_decoupling(config, rng.child("decoupling")),
        lambda: check_zero_shot_recovery(config, rng.child("zero_shot")),
        lambda: check_gradients(config, rng.child("gradients")),
    ]
    results = []
    for suite in suites:
        for result in suite():
            logger.info("check %s: %s (%.3g)", result.name, "ok" if result.passed else "FAILED", result.value)
            results.append(result)
    return results
