"""
ROC, AUC and TPR at low FPR
===========================

AUC is the probability that a random member outscores a random non-member
(ties count half). The low-FPR operating point is what matters for privacy
auditing, and it is read off conservatively: the best TPR whose FPR does not
exceed the target, with no interpolation.
"""

import numpy as np

from glira.metrics import auc, metrics_report, roc, tpr_at_fpr

curve = roc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
print(curve.points)
print("AUC", auc(curve), " TPR@0 FPR", tpr_at_fpr(curve, 0.0))

###############################################################################
# With 128 non-members an FPR of 1e-3 cannot be resolved at all -- a single
# false positive is already 1/128. The report says so instead of guessing.

rng = np.random.default_rng(0)
scores = np.r_[rng.normal(0.5, 1, 128), rng.normal(0, 1, 128)]
labels = np.r_[np.ones(128), np.zeros(128)]
report, _ = metrics_report(scores, labels, fpr_grid=(1e-4, 1e-3, 1e-2, 0.1))
print(report.to_dict())
