"""
Decomposition report: the softmax-mass split of one prompted attention call.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DecompositionReport:
    """
    Per-head, per-query quantities of the four-way attention decomposition.

    Arrays are heads x queries. Instance-side fields use the N instance
    queries, prompt-side fields (suffix _p) the M prompt queries. Lambdas
    are softmax denominators; they are also stored as logs so that large
    logits never overflow the report.
    """

    log_lambda_xx: np.ndarray
    log_lambda_xp: np.ndarray
    f: np.ndarray
    h: np.ndarray
    hf_ratio: np.ndarray
    log_lambda_pp: np.ndarray
    log_lambda_px: np.ndarray
    f_p: np.ndarray
    h_p: np.ndarray
    num_instances: int
    num_prompts: int
    a_xx: np.ndarray
    a_xp: np.ndarray
    a_pp: np.ndarray
    a_px: np.ndarray
    sigma_applied: float
    beta_applied: float

    @property
    def log_lambda_x_full(self) -> np.ndarray:
        return np.logaddexp(self.log_lambda_xx, self.log_lambda_xp)

    @property
    def lambda_xx(self) -> np.ndarray:
        return np.exp(self.log_lambda_xx)

    @property
    def lambda_xp(self) -> np.ndarray:
        return np.exp(self.log_lambda_xp)

    @property
    def lambda_x_full(self) -> np.ndarray:
        return np.exp(self.log_lambda_x_full)

    @property
    def sigma(self) -> float:
        """M / N."""
        return self.num_prompts / self.num_instances

    @property
    def beta(self) -> float:
        """M / (M + N)."""
        return self.num_prompts / (self.num_prompts + self.num_instances)

    @property
    def sub_outputs(self):
        """The four sub-attention outputs A(X,X), A(X,P), A(P,P), A(P,X)."""
        return self.a_xx, self.a_xp, self.a_pp, self.a_px

    def recombined_instances(self) -> np.ndarray:
        """f * A(X,X) + h * A(X,P), per head, heads concatenated."""
        return _recombine(self.f, self.a_xx, self.h, self.a_xp)

    def recombined_prompts(self) -> np.ndarray:
        """f_p * A(P,P) + h_p * A(P,X), per head, heads concatenated."""
        return _recombine(self.f_p, self.a_pp, self.h_p, self.a_px)

    def summary(self) -> dict:
        return {
            "num_instances": self.num_instances,
            "num_prompts": self.num_prompts,
            "sigma": self.sigma,
            "beta": self.beta,
            "f_mean": float(self.f.mean()),
            "h_mean": float(self.h.mean()),
            "hf_ratio_mean": float(self.hf_ratio.mean()),
            "hf_ratio_max": float(self.hf_ratio.max()),
        }


def _recombine(c1: np.ndarray, a1: np.ndarray, c2: np.ndarray, a2: np.ndarray) -> np.ndarray:
    heads = c1.shape[0]
    width = a1.shape[1] // heads
    parts = []
    for k in range(heads):
        cols = slice(k * width, (k + 1) * width)
        parts.append(c1[k][:, None] * a1[:, cols] + c2[k][:, None] * a2[:, cols])
    return np.concatenate(parts, axis=1)
