"""
Logits from probabilities
=========================

A target that only returns probabilities has lost one number per query: the
additive constant inside the softmax. Subtracting the mean log-probability
returns the zero-sum representative, which equals the true logits when those
already sum to zero and is off by ``|sum(z)| / K`` per coordinate otherwise.
"""

import numpy as np

from glira.blackbox import reconstruct_logits, reconstruction_report
from glira.data import make_synthetic
from glira.model import ArchitectureSpec, center_output_layer, init_classifier, softmax

z = np.array([1.0, 2.0, 3.0])
print(reconstruct_logits(softmax(z)))        # -> [-1, 0, 1]
print(abs(z.sum()) / len(z))                 # per-coordinate error: 2

###############################################################################
# On a model, the error is driven by how far the logits are from summing to
# zero. Centering the output layer makes every logit vector sum to zero.

data = make_synthetic(3, 8, 200, 1.0, seed=0)
model = init_classifier(ArchitectureSpec((8, 16, 3), init_seed=5))
print(reconstruction_report(model, data))
print(reconstruction_report(center_output_layer(model), data))

###############################################################################
# The probabilities are clamped at 1e-12 before the logarithm, so the recovery
# is exact only while the logit spread stays below about 27.6.

for spread in (10.0, 25.0, 40.0):
    z = np.array([spread / 2, -spread / 2])
    print(spread, np.abs(reconstruct_logits(softmax(z)) - z).max())
