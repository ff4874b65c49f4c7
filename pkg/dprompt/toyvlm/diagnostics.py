"""
Diagnostics over per-layer encoder traces.
"""

from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from ..attention import AttentionWeights, hf_ratio_profile
from ..errors import ShapeError
from ..numerics import RngStream, Tensor2D
from .encoder import EncoderTrace
from .model import PromptedModel


def _check_images(images: Sequence[np.ndarray]) -> None:
    if not images:
        raise ShapeError("attention_map_distance needs at least one image")
    counts = {np.asarray(img).shape[0] for img in images}
    if len(counts) != 1:
        raise ShapeError(f"images have mismatched patch counts: {sorted(counts)}")


def class_token_maps(model: PromptedModel, patches) -> Dict[int, np.ndarray]:
    """Per layer, heads x N attention of the class token over instance keys."""
    trace = EncoderTrace()
    model.encode_image(patches, trace=trace)
    return {layer: probe.instance_map[:, 0, :] for layer, probe in trace.probes.items()}


def attention_map_distance(model_a: PromptedModel, model_b: PromptedModel,
                           images: Sequence[np.ndarray],
                           layers: Optional[Iterable[int]] = None) -> Dict[int, float]:
    """
    Mean absolute difference of class-token attention maps, per layer.

    Args:
        model_a, model_b: Models to compare (same visual geometry)
        images: Images with equal patch counts
        layers: 1-based layers to report (default: every shared layer)

    Returns:
        {layer: distance averaged over heads, keys and images}

    Raises:
        ShapeError: If images are empty or have different patch counts
    """
    _check_images(images)
    totals: Dict[int, float] = {}
    for patches in images:
        maps_a = class_token_maps(model_a, patches)
        maps_b = class_token_maps(model_b, patches)
        shared = sorted(set(maps_a) & set(maps_b))
        wanted = shared if layers is None else [l for l in layers if l in shared]
        for layer in wanted:
            if maps_a[layer].shape != maps_b[layer].shape:
                raise ShapeError(f"layer {layer} maps differ in shape")
            d = float(np.mean(np.abs(maps_a[layer] - maps_b[layer])))
            totals[layer] = totals.get(layer, 0.0) + d
    return {layer: total / len(images) for layer, total in sorted(totals.items())}


def hf_ratio_by_layer(model: PromptedModel, patches) -> Dict[int, np.ndarray]:
    """hf ratio (heads x N) at each prompted visual layer."""
    trace = EncoderTrace()
    model.encode_image(patches, trace=trace)
    encoder = model.model.visual
    params = model.model.params()
    out = {}
    for layer, prompts in trace.prompt_inputs.items():
        if prompts is None:
            continue
        w = encoder.attention_weights(params, layer)
        out[layer] = hf_ratio_profile(Tensor2D(trace.attention_inputs[layer]), Tensor2D(prompts), w)
    return out


def uniform_logit_ratio(num_instances: int, num_prompts: int, model_dim: int,
                        num_heads: int, rng: RngStream) -> np.ndarray:
    """hf ratio with Wk = 0, where every logit is 0 and the ratio is exactly M/N."""
    w = AttentionWeights.random(model_dim, num_heads, rng.child("weights"))
    w = w.with_matrix("wk", np.zeros((model_dim, model_dim)))
    x = rng.child("x").tensor(num_instances, model_dim)
    p = rng.child("p").tensor(num_prompts, model_dim)
    return hf_ratio_profile(x, p, w)
