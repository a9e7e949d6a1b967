"""
Distilling a black-box target
=============================

Shadow models in the distillation-guided attack are students of the target:
they see only its outputs on shadow data. With the logit-matching loss the
student's architecture need not match the target's at all.
"""

import numpy as np

from glira.data import make_synthetic, split_experiment
from glira.distill import DistillConfig, ModelOracle, distill, kd_loss
from glira.model import ArchitectureSpec, TrainConfig, forward_logits, init_classifier, predict, train

data = make_synthetic(2, 16, 1024, 1.0, seed=0, separation=0.25)
plan = split_experiment(data, {"target": 512, "eval": 128}, seed=1)
target = train(init_classifier(ArchitectureSpec((16, 32, 2), init_seed=2)),
               data.subset(plan.target_train_ids), TrainConfig(steps=2000, shuffle_seed=3))
oracle = ModelOracle(target, mode="logits")

pool = data.subset(plan.shadow_pool_ids)
probe = data.subset(plan.nonmember_eval_ids)

###############################################################################
# A same-architecture and a mismatched (wider, deeper, tanh) student.

students = {
    "relu 16-32-2": ArchitectureSpec((16, 32, 2), "relu", init_seed=10),
    "tanh 16-64-64-2": ArchitectureSpec((16, 64, 64, 2), "tanh", init_seed=11),
}
for name, spec in students.items():
    for variant, lr in (("kl", 0.1), ("mse", 0.01)):
        cfg = DistillConfig(variant=variant, temperature=1.0, steps=2000, learning_rate=lr, seed=4)
        student = distill(oracle, pool, spec, cfg)
        agree = np.mean(predict(student, probe.features) == predict(target, probe.features))
        gap = np.abs(forward_logits(student, probe.features) - oracle.query(probe.features)).mean()
        print(f"{name:16s} {variant:3s}  argmax agreement {agree:.3f}  mean |logit gap| {gap:.3f}")

###############################################################################
# The objective itself: alpha trades the distillation term against plain
# cross-entropy on the true label.

zs, zt = np.array([0.5, -0.5]), np.array([2.0, -2.0])
for alpha in (0.0, 0.5, 1.0):
    print(alpha, kd_loss(0, zs, zt, DistillConfig(alpha=alpha, variant="mse")))
