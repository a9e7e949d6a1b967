"""ROC analysis for membership scores: full curve, AUC and TPR at fixed FPR."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

__all__ = ["RocCurve", "MetricsReport", "roc", "auc", "tpr_at_fpr", "metrics_report",
           "DEFAULT_FPR_GRID"]

DEFAULT_FPR_GRID = (1e-4, 1e-3, 1e-2)


@dataclass(frozen=True)
class RocCurve:
    """Points from (0, 0) to (1, 1); ``thresholds[i]`` admits ``points[i]``.

    The first threshold is ``+inf`` (nothing predicted a member).
    """

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def to_dict(self):
        return {"fpr": self.fpr.tolist(), "tpr": self.tpr.tolist(),
                "thresholds": [None if np.isinf(t) else float(t) for t in self.thresholds]}

    def save_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    def save_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "fpr", "tpr"])
            for t, f, p in zip(self.thresholds, self.fpr, self.tpr):
                w.writerow(["inf" if np.isinf(t) else repr(float(t)), repr(float(f)), repr(float(p))])


def roc(scores, labels):
    """ROC curve sweeping every distinct score as a threshold, highest first.

    A point is predicted a member when ``score >= threshold``; equal scores
    always enter together.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape or s.ndim != 1:
        raise ConfigError("scores and labels must be 1-D and of equal length")
    n_pos = int(y.sum())
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ConfigError("ROC needs both members and non-members")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    # last index of each run of equal scores
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    thresholds = np.r_[np.inf, s[last]]
    return RocCurve(fpr, tpr, thresholds)


def auc(curve):
    """Trapezoidal area under the curve."""
    return float(np.sum(np.diff(curve.fpr) * (curve.tpr[1:] + curve.tpr[:-1]) / 2.0))


def tpr_at_fpr(curve, fpr_target):
    """Largest TPR over curve points whose FPR does not exceed ``fpr_target``.

    No interpolation between points, so low-FPR values are never overstated.
    """
    ok = curve.fpr <= fpr_target
    return float(curve.tpr[ok].max())


@dataclass(frozen=True)
class MetricsReport:
    auc: float
    tpr_at: dict
    num_members: int
    num_nonmembers: int

    def to_dict(self):
        return {
            "auc": self.auc,
            "tpr_at": {repr(k): ("insufficient n" if v is None else v) for k, v in self.tpr_at.items()},
            "num_members": self.num_members,
            "num_nonmembers": self.num_nonmembers,
        }

    def save_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


def metrics_report(scores, labels, fpr_grid=DEFAULT_FPR_GRID):
    """AUC plus TPR at each FPR of the grid.

    A grid FPR below ``1 / num_nonmembers`` cannot be resolved by the
    evaluation set and is reported as ``None`` ("insufficient n").
    """
    curve = roc(scores, labels)
    y = np.asarray(labels).astype(bool)
    n_neg = int((~y).sum())
    tpr_at = {}
    for f in fpr_grid:
        tpr_at[float(f)] = None if f * n_neg < 1 else tpr_at_fpr(curve, f)
    return MetricsReport(auc(curve), tpr_at, int(y.sum()), n_neg), curve
