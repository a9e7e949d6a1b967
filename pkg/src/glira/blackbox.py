"""Logit recovery for targets that only expose probabilities.

Softmax forgets an additive constant: ``ln p_k = z_k - logsumexp(z)``. If the
target's logits sum to (nearly) zero, subtracting the mean log-probability
recovers them. For arbitrary logits the recovered vector is ``z - mean(z)``,
so every coordinate is off by exactly ``|sum(z)| / K``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError
from .model import EPS_PROB, forward_logits, softmax

__all__ = ["ReconstructionReport", "reconstruct_logits", "reconstruction_report"]


@dataclass(frozen=True)
class ReconstructionReport:
    mean_abs_error: float
    max_abs_error: float
    logit_sum_estimate: float

    def to_dict(self):
        return asdict(self)


def reconstruct_logits(probs):
    """Zero-sum logits whose softmax is ``probs`` (clamped at ``EPS_PROB``).

    Works on a single vector or on rows of a 2-D array.
    """
    logp = np.log(np.clip(np.asarray(probs, dtype=np.float64), EPS_PROB, 1.0))
    return logp - logp.mean(axis=-1, keepdims=True)


def reconstruction_report(model, dataset):
    """Compare true logits of ``model`` on ``dataset`` with their reconstruction."""
    if len(dataset) == 0:
        raise ConfigError("reconstruction report needs a nonempty dataset")
    z = forward_logits(model, dataset.features)
    err = np.abs(reconstruct_logits(softmax(z)) - z)
    return ReconstructionReport(
        mean_abs_error=float(err.mean()),
        max_abs_error=float(err.max()),
        logit_sum_estimate=float(np.abs(z.sum(axis=1)).mean()),
    )
