"""Knowledge-distillation losses and the shadow-distillation training loop."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blackbox import reconstruct_logits
from .errors import ConfigError, ShapeError
from .model import (
    EPS_PROB,
    backward,
    cross_entropy,
    forward_logits,
    init_classifier,
    sgd,
    softmax,
)

__all__ = [
    "DistillConfig",
    "TeacherOracle",
    "ModelOracle",
    "kl_distill_loss",
    "mse_logit_loss",
    "kd_loss",
    "kd_loss_and_grad",
    "distill",
    "glira_kl_preset",
    "glira_mse_preset",
]

VARIANTS = ("kl", "mse")
MODES = ("logits", "probabilities")


@dataclass(frozen=True)
class DistillConfig:
    """Settings of one distillation run.

    ``alpha`` weighs the distillation term against hard-label cross-entropy.
    ``temperature`` softens both teacher and student for the KL variant and is
    ignored by the MSE variant. ``reconstruct`` lets the MSE variant run
    against a probability-only teacher by recovering zero-sum logits.
    """

    alpha: float = 1.0
    temperature: float = 1.0
    variant: str = "kl"
    steps: int = 1000
    learning_rate: float = 0.1
    batch_size: int = 64
    seed: int = 0
    momentum: float = 0.9
    weight_decay: float = 5e-4
    reconstruct: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must lie in [0, 1]")
        if not self.temperature > 0:
            raise ConfigError("temperature must be positive")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        if self.steps < 0 or self.batch_size < 1:
            raise ConfigError("need steps >= 0 and batch_size >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if not 0 <= self.momentum < 1 or self.weight_decay < 0:
            raise ConfigError("momentum must lie in [0, 1) and weight_decay be >= 0")

    def to_dict(self):
        return dict(self.__dict__)


def glira_kl_preset(**overrides):
    return DistillConfig(**{"alpha": 1.0, "temperature": 1.0, "variant": "kl", **overrides})


def glira_mse_preset(**overrides):
    return DistillConfig(**{"alpha": 1.0, "variant": "mse", **overrides})


class TeacherOracle:
    """Black-box query access to a target model.

    Subclasses implement :meth:`query`, mapping a batch of feature vectors
    (n, d) to outputs (n, K): probabilities or logits according to ``mode``.
    """

    mode = "probabilities"

    def query(self, features):
        raise NotImplementedError

    def logits_or_probs(self, features):
        x = np.asarray(features, dtype=np.float64)
        out = self.query(x[None, :] if x.ndim == 1 else x)
        return out[0] if x.ndim == 1 else out


class ModelOracle(TeacherOracle):
    """Wraps a :class:`~glira.model.Classifier`; read-only, so thread safe."""

    def __init__(self, model, mode="logits"):
        if mode not in MODES:
            raise ConfigError(f"oracle mode must be one of {MODES}")
        self.model = model
        self.mode = mode

    def query(self, features):
        z = forward_logits(self.model, features)
        return z if self.mode == "logits" else softmax(z)


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def kl_distill_loss(student_probs_tau, teacher_probs_tau, temperature):
    """``tau**2 * KL(teacher || student)`` on already softened distributions.

    Both arguments are clamped to ``EPS_PROB`` inside the logarithms. Accepts
    single vectors or row batches (returns one value per row).
    """
    ps, pt = _check_pair(student_probs_tau, teacher_probs_tau)
    terms = pt * (np.log(np.clip(pt, EPS_PROB, 1.0)) - np.log(np.clip(ps, EPS_PROB, 1.0)))
    kl = np.maximum(terms.sum(axis=-1), 0.0) * temperature ** 2
    return float(kl) if kl.ndim == 0 else kl


def mse_logit_loss(student_logits, teacher_logits):
    """Squared Euclidean distance between logit vectors (row-wise for batches)."""
    zs, zt = _check_pair(student_logits, teacher_logits)
    d = ((zs - zt) ** 2).sum(axis=-1)
    return float(d) if d.ndim == 0 else d


def _teacher_target(teacher_output, teacher_mode, config):
    """Teacher side of the distillation term: softened probs or logits."""
    t = np.asarray(teacher_output, dtype=np.float64)
    if teacher_mode not in MODES:
        raise ConfigError(f"teacher mode must be one of {MODES}")
    if config.variant == "kl":
        if teacher_mode == "logits":
            return softmax(t, config.temperature)
        # p(tau) is proportional to p(1) ** (1 / tau)
        return softmax(np.log(np.clip(t, EPS_PROB, 1.0)), config.temperature)
    if teacher_mode == "logits":
        return t
    if not config.reconstruct:
        raise ConfigError("MSE distillation needs teacher logits; enable reconstruct "
                          "to estimate them from probabilities")
    return reconstruct_logits(t)


def _kd_terms(labels, student_logits, teacher_output, config, teacher_mode):
    """Per-row (total, ce, distill) and d total / d student_logits."""
    zs = np.asarray(student_logits, dtype=np.float64)
    labels = np.asarray(labels)
    target = _teacher_target(teacher_output, teacher_mode, config)
    if target.shape != zs.shape:
        raise ShapeError(f"teacher output shape {target.shape} != student {zs.shape}")
    rows = np.arange(len(labels))
    p1 = softmax(zs)
    ce = cross_entropy(p1, labels)
    dce = p1.copy()
    dce[rows, labels] -= 1.0
    if config.variant == "kl":
        tau = config.temperature
        ps = softmax(zs, tau)
        dist = kl_distill_loss(ps, target, tau)
        ddist = tau * (ps - target)
    else:
        dist = mse_logit_loss(zs, target)
        ddist = 2.0 * (zs - target)
    a = config.alpha
    total = a * dist + (1.0 - a) * ce
    grad = a * ddist + (1.0 - a) * dce
    return total, ce, dist, grad


def kd_loss(label, student_logits, teacher_output, config, teacher_mode="logits"):
    """``alpha * distill_term + (1 - alpha) * CE(label, softmax(student_logits))``.

    The distillation term is the tempered KL loss or the logit MSE depending
    on ``config.variant``. ``teacher_mode`` says whether ``teacher_output``
    holds logits or probabilities.
    """
    zs = np.asarray(student_logits, dtype=np.float64)[None, :]
    t = np.asarray(teacher_output, dtype=np.float64)[None, :]
    total, _, _, _ = _kd_terms(np.array([label]), zs, t, config, teacher_mode)
    return float(total[0])


def kd_loss_and_grad(student, features, labels, teacher_output, config, teacher_mode="logits"):
    """Batch-mean KD objective, its parameter gradient, and the mean terms."""
    zs = forward_logits(student, features)
    total, ce, dist, dz = _kd_terms(labels, zs, teacher_output, config, teacher_mode)
    n = len(labels)
    grad = backward(student, features, dz / n)
    terms = {"ce_term": float(np.mean(ce)), "distill_term": float(np.mean(dist))}
    return float(np.mean(total)), grad, terms


def distill(teacher, shadow_data, student_spec, config, log=None):
    """Train a fresh student of ``student_spec`` to imitate ``teacher``.

    The teacher is queried on each minibatch as it is drawn. ``log``, when
    given, is called as ``log(step, kd_loss, {"ce_term": .., "distill_term": ..})``.
    """
    if len(shadow_data) == 0:
        raise ConfigError("distillation needs a nonempty shadow dataset")
    if shadow_data.feature_dim != student_spec.feature_dim:
        raise ShapeError("shadow data feature_dim does not match the student architecture")
    if config.variant == "mse" and teacher.mode == "probabilities" and not config.reconstruct:
        raise ConfigError("MSE distillation from a probability-only teacher needs reconstruct=True")
    student = init_classifier(student_spec)
    x, y = shadow_data.features, shadow_data.labels

    def objective(current, idx):
        xb = x[idx]
        return kd_loss_and_grad(current, xb, y[idx], teacher.query(xb), config, teacher.mode)

    return sgd(student, objective, len(shadow_data), config.steps, config.batch_size,
               config.learning_rate, config.momentum, config.weight_decay, config.seed, log=log)


def kl_grad_wrt_student_logits(student_logits, teacher_logits, temperature):
    """Analytic gradient of the tempered KL loss w.r.t. raw student logits."""
    zs = np.asarray(student_logits, dtype=np.float64)
    zt = np.asarray(teacher_logits, dtype=np.float64)
    return temperature * (softmax(zs, temperature) - softmax(zt, temperature))

