"""
The offline attack end to end
=============================

For each evaluation example the target's confidence (``log p / (1 - p)`` of
the true class, averaged over a few jittered queries) is compared against a
Gaussian fitted to the same statistic over shadow models that never trained
on it. The score is that Gaussian's CDF at the target's confidence.
"""

import tempfile

import numpy as np

from glira import pipeline
from glira.config import load_config, with_overrides
from glira.metrics import roc

cfg = load_config(text="""
[shadows]
count = 8
""")

out = tempfile.mkdtemp()
pipeline.run_target(cfg, out)
for mode in ("plain", "kl", "mse"):
    run = with_overrides(cfg, mode=mode)
    scores, report = pipeline.run_attack(run, out, ensemble=pipeline.run_shadows(run, out))
    print(f"{mode:5s} AUC {report.auc:.3f}  TPR@1% FPR {report.tpr_at[0.01]:.3f}")

###############################################################################
# Members sit in the upper tail of their OUT distributions more often than
# non-members do.

s = np.array([x.score for x in scores])
members, nonmembers = s[:128], s[128:]
print("median score  members %.3f  non-members %.3f" % (np.median(members), np.median(nonmembers)))

curve = roc(s, np.r_[np.ones(128), np.zeros(128)])
for fpr, tpr in curve.points[:: max(1, len(curve.points) // 8)]:
    print(f"fpr {fpr:.3f}  tpr {tpr:.3f}")

###############################################################################
# No memorisation, no signal: an untrained target scores near chance.

blank = with_overrides(cfg, target={"steps": 0})
_, report = pipeline.run_all(blank, tempfile.mkdtemp())
print("untrained target AUC", round(report.auc, 3))
