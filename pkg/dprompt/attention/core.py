"""
Prompt-augmented attention.

All modes are built from one primitive, the sub-attention A(Y, Z): per head
softmax(q(Y) k(Z)^T * scale) v(Z), heads concatenated. Instance forwarding
and prompt forwarding then combine the four sub-attentions A(X,X), A(X,P),
A(P,P) and A(P,X) according to the selected AttentionMode.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np

from ..errors import DegenerateDecompositionError, ShapeError
from ..numerics import (
    Tensor2D, add, concat_cols, concat_rows, logsumexp_rows, matmul, mul, scale,
    slice_cols, slice_rows, softmax_rows, transpose,
)
from .base import AttentionMode, AttentionProbe
from .mask import MaskSpec, block_or_none
from .report import DecompositionReport
from .weights import AttentionWeights

MaskLike = Union[MaskSpec, np.ndarray, None]


@dataclass
class _SubAttention:
    heads: List[Tensor2D]
    logits: List[np.ndarray]
    probs: List[np.ndarray]
    visible: Optional[np.ndarray]
    lse: Optional[List[Tensor2D]] = None

    @property
    def out(self) -> Tensor2D:
        if len(self.heads) == 1:
            return self.heads[0]
        return concat_cols(*self.heads)

    def shifted_mass(self, shift: np.ndarray) -> np.ndarray:
        """Per head, sum over visible keys of exp(logit - shift), heads x queries."""
        rows = []
        for k, logits in enumerate(self.logits):
            e = np.exp(logits - shift[k][:, None])
            if self.visible is not None:
                e = np.where(self.visible, e, 0.0)
            rows.append(e.sum(axis=1))
        return np.stack(rows)

    def max_logits(self) -> np.ndarray:
        rows = []
        for logits in self.logits:
            if self.visible is not None:
                logits = np.where(self.visible, logits, -np.inf)
            rows.append(logits.max(axis=1))
        return np.stack(rows)


def _sub_attention(y: Tensor2D, z: Tensor2D, w: AttentionWeights,
                   visible: Optional[np.ndarray], with_lse: bool = False) -> _SubAttention:
    if y.cols != w.model_dim or z.cols != w.model_dim:
        raise ShapeError(f"attention inputs must have {w.model_dim} columns, "
                         f"got {y.cols} and {z.cols}")
    q = matmul(y, w.wq)
    k = matmul(z, w.wk)
    v = matmul(z, w.wv)
    hd = w.head_dim
    sub = _SubAttention(heads=[], logits=[], probs=[], visible=None, lse=[] if with_lse else None)
    for head in range(w.num_heads):
        cols = (head * hd, (head + 1) * hd)
        qh, kh, vh = (t if w.num_heads == 1 else slice_cols(t, *cols) for t in (q, k, v))
        logits = scale(matmul(qh, transpose(kh)), w.scale)
        p = softmax_rows(logits, visible)
        sub.heads.append(matmul(p, vh))
        sub.logits.append(logits.value)
        sub.probs.append(p.value)
        if with_lse:
            sub.lse.append(logsumexp_rows(logits, visible))
    if visible is not None and not np.asarray(visible, dtype=bool).all():
        sub.visible = np.asarray(visible, dtype=bool)
    return sub


def _raw_mask(mask: MaskLike, rows: int, cols: int) -> Optional[np.ndarray]:
    if mask is None:
        return None
    if isinstance(mask, MaskSpec):
        mask = mask.visible
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (rows, cols):
        raise ShapeError(f"mask shape {mask.shape} does not match {rows}x{cols} attention")
    return mask


def attend(y: Tensor2D, z: Optional[Tensor2D], w: AttentionWeights,
           mask: MaskLike = None) -> Tensor2D:
    """
    A(Y, Z): multi-head softmax attention of queries Y over keys/values Z.

    The output projection wo is NOT applied here; the encoder block applies
    it once after the mode-specific combination.

    Args:
        y: Queries (n x model_dim)
        z: Keys/values (k x model_dim)
        w: Projection weights
        mask: Optional visibility (MaskSpec or boolean n x k matrix)

    Returns:
        n x model_dim tensor

    Raises:
        ShapeError: If z is missing or dimensions disagree
    """
    if z is None:
        raise ShapeError("attend: key set Z is empty")
    return _sub_attention(y, z, w, _raw_mask(mask, y.rows, z.rows)).out


def _check_mask(mask: Optional[MaskSpec], n: int, m: int) -> Optional[MaskSpec]:
    if mask is None:
        return None
    if not isinstance(mask, MaskSpec):
        raise ShapeError("prompt attention masks must be MaskSpec instances")
    return mask.for_lengths(n, m)


def _four_way(x: Tensor2D, p: Tensor2D, w: AttentionWeights, mask: Optional[MaskSpec],
              with_lse: bool, need_pp: bool = True):
    xx = _sub_attention(x, x, w, block_or_none(mask, "x", "x"), with_lse)
    xp = _sub_attention(x, p, w, block_or_none(mask, "x", "p"), with_lse)
    pp = _sub_attention(p, p, w, block_or_none(mask, "p", "p"), with_lse) if need_pp else None
    px = _sub_attention(p, x, w, block_or_none(mask, "p", "x"), with_lse)
    return xx, xp, pp, px


def _split_coefficients(first: _SubAttention, second: _SubAttention):
    """
    Exact mass split between two key sets for the same queries.

    Both sums share one shift (the larger row max), so uniform logits give
    exact integer sums and the ratio second/first is exact.
    """
    shift = np.maximum(first.max_logits(), second.max_logits())
    s1 = first.shifted_mass(shift)
    s2 = second.shifted_mass(shift)
    total = s1 + s2
    return shift, s1, s2, s1 / total, s2 / total


def _build_report(xx, xp, pp, px, n: int, m: int, sigma: float, beta: float) -> DecompositionReport:
    shift, sxx, sxp, f, h = _split_coefficients(xx, xp)
    pshift, spp, spx, f_p, h_p = _split_coefficients(pp, px)
    return DecompositionReport(
        log_lambda_xx=shift + np.log(sxx),
        log_lambda_xp=shift + np.log(sxp),
        f=f,
        h=h,
        hf_ratio=sxp / sxx,
        log_lambda_pp=pshift + np.log(spp),
        log_lambda_px=pshift + np.log(spx),
        f_p=f_p,
        h_p=h_p,
        num_instances=n,
        num_prompts=m,
        a_xx=np.array(xx.out.value),
        a_xp=np.array(xp.out.value),
        a_pp=np.array(pp.out.value),
        a_px=np.array(px.out.value),
        sigma_applied=float(sigma),
        beta_applied=float(beta),
    )


def decompose(x: Tensor2D, p: Optional[Tensor2D], w: AttentionWeights,
              mask: Optional[MaskSpec] = None) -> DecompositionReport:
    """
    Four-way decomposition of attention over [X, P].

    Args:
        x: Instance tokens (N x D)
        p: Prompt tokens (M x D)
        w: Projection weights
        mask: Optional MaskSpec over [X, P]

    Returns:
        DecompositionReport (values only, no tape)

    Raises:
        DegenerateDecompositionError: If there are no prompt tokens
    """
    if p is None:
        raise DegenerateDecompositionError("decompose needs M >= 1 prompt tokens")
    x, p, w = x.detach(), p.detach(), w.detached()
    n, m = x.rows, p.rows
    mask = _check_mask(mask, n, m)
    xx, xp, pp, px = _four_way(x, p, w, mask, with_lse=False)
    return _build_report(xx, xp, pp, px, n, m, m / n, m / (m + n))


def hf_ratio_profile(x: Tensor2D, p: Optional[Tensor2D], w: AttentionWeights) -> np.ndarray:
    """
    lambda(x_i, P) / lambda(x_i, X) for every instance query.

    Returns:
        heads x N array
    """
    return decompose(x, p, w).hf_ratio


def _exact_combine(a: _SubAttention, b: _SubAttention) -> Tensor2D:
    """Per head: f * a + h * b with f, h = softmax over [lse_a, lse_b]."""
    heads = []
    for k in range(len(a.heads)):
        coeff = softmax_rows(concat_cols(a.lse[k], b.lse[k]))
        f = slice_cols(coeff, 0, 1)
        h = slice_cols(coeff, 1, 2)
        heads.append(add(mul(f, a.heads[k]), mul(h, b.heads[k])))
    return heads[0] if len(heads) == 1 else concat_cols(*heads)


def _weighted(c1: float, a: Tensor2D, c2: float, b: Tensor2D) -> Tensor2D:
    if c2 == 0.0:
        return a if c1 == 1.0 else scale(a, c1)
    first = a if c1 == 1.0 else scale(a, c1)
    return add(first, scale(b, c2))


def _instance_map_coupled(xx: _SubAttention, xp: _SubAttention) -> List[np.ndarray]:
    # probability placed on instance keys by the joint softmax: f * softmax_xx
    _, _, _, f, _ = _split_coefficients(xx, xp)
    return [f[k][:, None] * xx.probs[k] for k in range(len(xx.probs))]


def prompt_attention_forward(
    x: Tensor2D,
    p: Optional[Tensor2D],
    w: AttentionWeights,
    mode: AttentionMode,
    mask: Optional[MaskSpec] = None,
    sigma: Optional[float] = None,
    beta: Optional[float] = None,
    with_report: bool = True,
    probe: Optional[AttentionProbe] = None,
) -> Tuple[Tensor2D, Optional[Tensor2D], Optional[DecompositionReport]]:
    """
    One prompted attention call, split into instance and prompt outputs.

    Args:
        x: Instance tokens (N x D)
        p: Prompt tokens (M x D) or None when the layer carries no prompts
        w: Projection weights (wo is not applied)
        mode: AttentionMode
        mask: Optional MaskSpec over [X, P]
        sigma: Override for the instance-forwarding coefficient (default M/N)
        beta: Override for the prompt-forwarding coefficient (default M/(M+N))
        with_report: Build a DecompositionReport when prompts are present
        probe: Optional collector for the instance attention map and report

    Returns:
        (X_out, P_out, report). Without prompts every mode returns
        (A(X,X), None, None) through the same computation.

    Raises:
        ConfigError: If the mode is unknown
        ShapeError: If shapes or the mask disagree
    """
    mode = AttentionMode.parse(mode)
    n = x.rows
    if p is None:
        mask = _check_mask(mask, n, 0)
        xx = _sub_attention(x, x, w, block_or_none(mask, "x", "x"))
        if probe is not None:
            probe.record(xx.probs, None)
        return xx.out, None, None

    m = p.rows
    mask = _check_mask(mask, n, m)
    sigma = m / n if sigma is None else float(sigma)
    beta = m / (m + n) if beta is None else float(beta)
    want_report = with_report or probe is not None

    if mode is AttentionMode.VANILLA_CONCAT:
        joint = concat_rows(x, p)
        full = _sub_attention(joint, joint, w, None if mask is None else mask.visible)
        x_out = slice_rows(full.out, 0, n)
        p_out = slice_rows(full.out, n, n + m)
        report = None
        if want_report:
            xx, xp, pp, px = _four_way(x.detach(), p.detach(), w.detached(), mask, with_lse=False)
            report = _build_report(xx, xp, pp, px, n, m, sigma, beta)
        if probe is not None:
            probe.record([pr[:n, :n] for pr in full.probs], report)
        return x_out, p_out, report if with_report else None

    exact_instances = mode in (AttentionMode.EXACT_DECOMPOSED, AttentionMode.DARE)
    need_pp = want_report or mode in (AttentionMode.EXACT_DECOMPOSED, AttentionMode.DA,
                                      AttentionMode.DARE)
    xx, xp, pp, px = _four_way(x, p, w, mask, with_lse=True, need_pp=need_pp)

    if exact_instances:
        x_out = _exact_combine(xx, xp)
    else:
        x_out = _weighted(1.0, xx.out, sigma, xp.out)

    if mode is AttentionMode.EXACT_DECOMPOSED:
        p_out = _exact_combine(pp, px)
    elif mode is AttentionMode.DASR:
        p_out = px.out
    else:
        p_out = _weighted(beta, pp.out, 1.0 - beta, px.out)

    report = _build_report(xx, xp, pp, px, n, m, sigma, beta) if want_report else None
    if probe is not None:
        maps = _instance_map_coupled(xx, xp) if exact_instances else xx.probs
        probe.record(maps, report)
    return x_out, p_out, report if with_report else None
