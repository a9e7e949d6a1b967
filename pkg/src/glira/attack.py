"""Likelihood-ratio membership scores from shadow-model confidences.

Confidences are logit-scaled probabilities of the true class,
``phi(p) = log(p / (1 - p))``. For each queried example the OUT-model
confidences are summarised by a Gaussian and the target's confidence is
scored against it, either with the one-sided CDF test (offline) or with the
IN/OUT density ratio (online).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, ndtr

from .data import augment, augment_batch
from .errors import ConfigError
from .model import EPS_PROB, forward_logits

__all__ = [
    "ShadowModel",
    "ShadowEnsemble",
    "ConfidenceStats",
    "AttackScore",
    "phi",
    "confidence",
    "confidences_from_outputs",
    "fit_gaussian",
    "gaussian_logpdf",
    "online_log_score",
    "online_score",
    "offline_score",
    "glira_score",
    "score_dataset",
    "decide",
]

DEFAULT_VAR_FLOOR = 1e-6
TRAINING_MODES = ("plain", "kl", "mse")

_PHI_LO = float(np.log(EPS_PROB) - np.log1p(-EPS_PROB))
_PHI_HI = -_PHI_LO


@dataclass(frozen=True)
class ShadowModel:
    model: object
    seed: int
    subset_ids: np.ndarray


@dataclass(frozen=True)
class ShadowEnsemble:
    shadows: tuple
    training_mode: str = "plain"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "shadows", tuple(self.shadows))
        if not self.shadows:
            raise ConfigError("a shadow ensemble needs at least one model")
        if self.training_mode not in TRAINING_MODES:
            raise ConfigError(f"training_mode must be one of {TRAINING_MODES}")
        ks = {s.model.spec.num_classes for s in self.shadows}
        if len(ks) != 1:
            raise ConfigError("shadow models disagree on num_classes")

    def __len__(self):
        return len(self.shadows)

    @property
    def count(self):
        return len(self.shadows)

    def models(self):
        return [s.model for s in self.shadows]


@dataclass(frozen=True)
class ConfidenceStats:
    mu: float
    var: float

    @property
    def std(self):
        return float(np.sqrt(self.var))


@dataclass(frozen=True)
class AttackScore:
    example_id: int
    score: float
    variant: str = "offline"
    conf_obs: float = float("nan")
    mu_out: float = float("nan")
    var_out: float = float("nan")


def phi(p):
    """``log(p / (1 - p))`` after clamping ``p`` to ``[EPS_PROB, 1 - EPS_PROB]``."""
    p = np.clip(np.asarray(p, dtype=np.float64), EPS_PROB, 1.0 - EPS_PROB)
    out = np.log(p) - np.log1p(-p)
    return float(out) if out.ndim == 0 else out


def _phi_from_logits(z, labels):
    """phi of the softmax probability of ``labels``, evaluated without forming p.

    ``log p_y - log(1 - p_y) = z_y - logsumexp(z_{j != y})``; the result is
    clipped to the same range the probability clamp imposes.
    """
    z = np.asarray(z, dtype=np.float64)
    rows = np.arange(z.shape[0])
    zy = z[rows, labels]
    others = z.copy()
    others[rows, labels] = -np.inf
    return np.clip(zy - logsumexp(others, axis=1), _PHI_LO, _PHI_HI)


def confidences_from_outputs(outputs, labels, mode="logits"):
    """phi-confidence in the true class from a batch of model outputs (n, K)."""
    outputs = np.asarray(outputs, dtype=np.float64)
    labels = np.asarray(labels)
    if mode == "logits":
        return _phi_from_logits(outputs, labels)
    return phi(outputs[np.arange(len(labels)), labels])


def confidence(model, example):
    """phi of the model's softmax probability on the example's label."""
    z = forward_logits(model, example.features)
    return float(_phi_from_logits(z[None, :], np.array([example.label]))[0])


def fit_gaussian(confs, var_floor=DEFAULT_VAR_FLOOR):
    """Mean and population variance (floored at ``var_floor``)."""
    c = np.asarray(confs, dtype=np.float64)
    if c.size == 0:
        raise ConfigError("cannot fit a Gaussian to an empty list")
    if not np.all(np.isfinite(c)):
        raise ConfigError("confidences must be finite")
    if not var_floor > 0:
        raise ConfigError("var_floor must be positive")
    mu = float(c.mean())
    return ConfidenceStats(mu, max(float(np.mean((c - mu) ** 2)), var_floor))


def gaussian_logpdf(x, stats):
    return -0.5 * (np.log(2.0 * np.pi * stats.var) + (x - stats.mu) ** 2 / stats.var)


def online_log_score(conf_obs, stats_in, stats_out):
    """Log of the IN/OUT density ratio."""
    return float(gaussian_logpdf(conf_obs, stats_in) - gaussian_logpdf(conf_obs, stats_out))


def online_score(conf_obs, stats_in, stats_out):
    """IN/OUT Gaussian density ratio, evaluated in log space then exponentiated."""
    return float(np.exp(online_log_score(conf_obs, stats_in, stats_out)))


def offline_score(conf_obs, stats_out):
    """Gaussian CDF of ``conf_obs`` under the OUT fit: high when the target is
    unusually confident relative to models that never saw the example."""
    return float(ndtr((conf_obs - stats_out.mu) / np.sqrt(stats_out.var)))


def _target_confidences(target, queries, labels):
    """Mean phi-confidence of an oracle over query sets of shape (q, n, d)."""
    q, n, d = queries.shape
    out = target.query(queries.reshape(q * n, d))
    confs = confidences_from_outputs(out, np.tile(labels, q), target.mode)
    return confs.reshape(q, n).mean(axis=0)


def _model_confidences(model, queries, labels):
    q, n, d = queries.shape
    z = forward_logits(model, queries.reshape(q * n, d))
    return _phi_from_logits(z, np.tile(labels, q)).reshape(q, n).mean(axis=0)


def glira_score(target, example, ensemble, num_queries, aug_seed, var_floor=DEFAULT_VAR_FLOOR,
                example_id=0, aug_sigma=0.05, image_shape=None):
    """Offline score of one example against a shadow ensemble.

    Every model, target and shadows alike, is summarised by its mean
    phi-confidence over the same augmented query set. ``target`` is a
    :class:`~glira.distill.TeacherOracle`.
    """
    variants = augment(example, num_queries, aug_seed, sigma=aug_sigma, image_shape=image_shape)
    queries = np.stack([v.features for v in variants])[:, None, :]
    labels = np.array([example.label])
    shadow_confs = [float(_model_confidences(m, queries, labels)[0]) for m in ensemble.models()]
    stats = fit_gaussian(shadow_confs, var_floor)
    conf_obs = float(_target_confidences(target, queries, labels)[0])
    return AttackScore(example_id, offline_score(conf_obs, stats), "offline",
                       conf_obs, stats.mu, stats.var)


def score_dataset(target, dataset, ensemble, num_queries, aug_seed, var_floor=DEFAULT_VAR_FLOOR,
                  aug_sigma=0.05):
    """Vectorised :func:`glira_score` over every example of ``dataset``.

    Example ``i`` is augmented with seed ``example_seed(aug_seed, dataset.ids[i])``.
    Returns a list of :class:`AttackScore` in dataset order.
    """
    queries = augment_batch(dataset, num_queries, aug_seed, sigma=aug_sigma)
    labels = dataset.labels
    shadow = np.stack([_model_confidences(m, queries, labels) for m in ensemble.models()])
    mu = shadow.mean(axis=0)
    var = np.maximum(((shadow - mu) ** 2).mean(axis=0), var_floor)
    conf_obs = _target_confidences(target, queries, labels)
    scores = ndtr((conf_obs - mu) / np.sqrt(var))
    return [AttackScore(int(i), float(s), "offline", float(c), float(m), float(v))
            for i, s, c, m, v in zip(dataset.ids, scores, conf_obs, mu, var)]


def decide(score, threshold):
    """Membership bit: 1 iff the score reaches the threshold (ties count as members)."""
    value = score.score if isinstance(score, AttackScore) else score
    return int(value >= threshold)
