"""The three losses, the pseudo-label rule and the warm-up schedule.

    python demos/03_losses.py
"""

import math

import numpy as np

from videossl.losses import (
    LossSchedule, PseudoLabelRule, distill_soft_ce, entropy, lambda_u, pseudo_assign, pseudo_ce,
    supervised_ce,
)

# supervised cross-entropy of a uniform guess is ln C
p = np.full((3, 8), 1 / 8)
print("uniform CE", supervised_ce(p, np.eye(8)[[0, 4, 7]]).item(), "ln 8", math.log(8))

# confident entries become T, everything else keeps the prediction
pz = np.array([[0.97, 0.02, 0.01], [0.5, 0.3, 0.2]])
targets = pseudo_assign(pz, PseudoLabelRule(target_value=10.0, delta=0.95))
print("pseudo targets\n", targets.data)
print("pseudo CE", pseudo_ce(targets, pz).item())

# with no confident entry the pseudo loss is just the entropy of the prediction
flat = np.array([[0.4, 0.35, 0.25]])
print("unconfident row: pseudo CE", pseudo_ce(pseudo_assign(flat, PseudoLabelRule()), flat).item(),
      "entropy", entropy(flat)[0])

# distillation: soft CE against the teacher is entropy plus KL, so it is smallest at q = h
h = np.array([[0.7, 0.2, 0.1]])
for q in ([[0.7, 0.2, 0.1]], [[0.5, 0.3, 0.2]], [[0.1, 0.1, 0.8]]):
    print("q", q[0], "soft CE", round(distill_soft_ce(h, np.array(q)).item(), 5))

# the pseudo-label weight switches on at two thirds of training
for mode in ("step", "linear"):
    s = LossSchedule(warmup_mode=mode)
    print(mode, [lambda_u(t, 30_000, s) for t in (0, 10_000, 19_999, 20_000, 29_999)])
