"""
Regularity of a u-Gibbs measure
===============================

Push arc length on an unstable curve forward, average over time,
project along stable leaves and watch the r-norm as r shrinks.
"""

from dynlab import default_params
from dynlab.measures import (
    NormConfig,
    abs_continuity_scan,
    birkhoff_measure,
    default_curve,
    project_measure,
    r_norm,
)

params = default_params("ex1")
curve = default_curve(params)

mu = birkhoff_measure(curve, 2000, params, n_atoms=100, seed=0)
proj = project_measure(mu)
print(len(proj.weights), proj.weights.sum())

print(r_norm(proj, NormConfig(r=0.02, integration="grid")))

scan = abs_continuity_scan(proj, [0.05, 0.035, 0.025, 0.015, 0.01, 0.005])
print(scan.norms)
print("bounded:", scan.bounded, "exponent:", scan.fitted_exponent)

# a single curve is not absolutely continuous: norms grow like r^-1/2
line = project_measure(birkhoff_measure(curve, 1, params, n_atoms=5000, seed=0))
print(abs_continuity_scan(line, [0.05, 0.02, 0.01, 0.005], integration="exact").fitted_exponent)
