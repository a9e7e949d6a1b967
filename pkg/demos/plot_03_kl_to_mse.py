"""
From KL distillation to logit matching
======================================

At high temperature the tempered-KL gradient with respect to the student
logits, ``tau * (softmax(zs / tau) - softmax(zt / tau))``, tends to
``(zs - zt) / K`` for zero-mean logits -- the gradient of the squared logit
distance divided by ``2K``. Logit matching is the infinite-temperature limit.
"""

import numpy as np

from glira.distill import kl_grad_wrt_student_logits

rng = np.random.default_rng(0)
K = 5
zs = rng.normal(size=K)
zt = rng.normal(size=K)
zs -= zs.mean()
zt -= zt.mean()

mse_grad = 2 * (zs - zt) / (2 * K)
for tau in (1, 3, 10, 100, 1000):
    g = kl_grad_wrt_student_logits(zs, zt, tau)
    err = np.linalg.norm(g - mse_grad) / np.linalg.norm(mse_grad)
    print(f"tau = {tau:5d}   relative gap {err:.2e}")

# softmax ignores a constant added to the student logits, so KL does too;
# the squared distance does not, and the two gradients part ways
shifted = zs + 3.0
g = kl_grad_wrt_student_logits(shifted, zt, 1000)
mse_shifted = 2 * (shifted - zt) / (2 * K)
print("shifted student, tau=1000:", np.linalg.norm(g - mse_shifted) / np.linalg.norm(mse_shifted))
