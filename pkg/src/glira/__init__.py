"""Offline likelihood-ratio membership inference with distilled shadow models."""

from .attack import (
    AttackScore,
    ConfidenceStats,
    ShadowEnsemble,
    ShadowModel,
    confidence,
    decide,
    fit_gaussian,
    glira_score,
    offline_score,
    online_score,
    phi,
    score_dataset,
)
from .blackbox import ReconstructionReport, reconstruct_logits, reconstruction_report
from .data import (
    Dataset,
    Example,
    SplitPlan,
    augment,
    make_synthetic,
    sample_shadow_subset,
    split_experiment,
)
from .distill import DistillConfig, ModelOracle, TeacherOracle, distill, kd_loss, kl_distill_loss, mse_logit_loss
from .errors import ConfigError, MissingArtifact, ShapeError, TrainingDiverged
from .metrics import MetricsReport, RocCurve, auc, metrics_report, roc, tpr_at_fpr
from .model import (
    ArchitectureSpec,
    Classifier,
    TrainConfig,
    accuracy,
    cross_entropy,
    forward_logits,
    init_classifier,
    softmax,
    train,
)

__version__ = "0.1.0"
