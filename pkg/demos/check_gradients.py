"""Finite-difference audit of the hand-written autodiff engine.

Every primitive op, and the full generator objective (generator network,
random rotation, reprojection, discriminator, angle hinge), is compared
against central differences.  Then a hand-computed Adam trace is replayed.
"""

import math

from poselift import autodiff as ad
from poselift import gradcheck

results = gradcheck.run_all(seed=0)
print(gradcheck.format_results(results))

p = ad.parameter([[1.0]])
state = ad.AdamState.for_param(p, learning_rate=0.1)
w, m, v = 1.0, 0.0, 0.0
for t, g in ((1, 0.5), (2, -2.0)):
    p.grad = [[g]]
    ad.adam_step(p, state)
    m = 0.9 * m + 0.1 * g
    v = 0.999 * v + 0.001 * g * g
    w -= 0.1 * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
    print(f"adam step {t}: engine {p.values[0, 0]:.15f}  by hand {w:.15f}")
