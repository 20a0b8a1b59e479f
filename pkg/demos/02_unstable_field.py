"""
Unstable slopes and how far apart they stay
===========================================

"""

import numpy as np

from dynlab import default_params
from dynlab.transversality import audit_H1, exhaustive_floor
from dynlab.unstable import (
    alpha_uu_batch,
    cylinder_field,
    example2_constants,
    recursion_residual,
    transversality_constant,
)

params = default_params("ex1")

# slopes of the unstable direction for a few random backward words
rng = np.random.default_rng(0)
words = rng.integers(1, params.l + 1, size=(5, 30))
print(alpha_uu_batch(words, params))

# the series solves the one-step recursion up to rounding
print("residual", np.max(np.abs(recursion_residual(words, params))))

# slopes on all cylinders of depth 6
field = cylinder_field(params, 6)
print(len(field.values), field.values.min(), field.values.max(), field.sup_bound)

# separation floor as a function of the stable distance
for eps in (0.1, 0.05, 0.01):
    print(eps, transversality_constant(eps, params))

# exhaustive check over all pairs of depth-6 cylinders
print(exhaustive_floor(params, 6, 0.05))

# sampled audit with its worst pairs
audit = audit_H1(params, [0.1, 0.05], n_pairs=5000, seed=0)
for row in audit["results"]:
    print(row["epsilon"], row["pass"])
print(audit["worst_pairs"][:3])

# Ex2 has closed-form constants
print(example2_constants(default_params("ex2")))
