"""
Orbits of the skew product and points on the attractor
======================================================

"""

import numpy as np

from dynlab import default_params
from dynlab.dynamics import Itinerary, attractor_point, orbit, step

# Ex1: three branches, piecewise-affine fibre map, contracting z
params = default_params("ex1")
print(params)

# one step from the origin
print(step((0.0, 0.0, 0.0), params))

# a long orbit; x is driven by a symbol stream so it never collapses to 0
orb = orbit((0.3, 0.0, 0.0), 5000, params, seed=1)
print(orb.shape)
print("y range", orb[:, 1].min(), orb[:, 1].max())
print("z range", orb[:, 2].min(), orb[:, 2].max())

# the attractor over x: fix a backward word and sum the series
word = Itinerary(tuple([1] * 40))
p = attractor_point(word, params, depth=40, x=0.0)
print(p)

# x = 0 is fixed with symbol 1, so iterating forward lands on the same point
q = np.array([0.0, 0.0, 0.0])
for _ in range(60):
    q = np.asarray(step(tuple(q), params))
print(q)
