"""
How many physical measures?
===========================

"""

import numpy as np

from dynlab import default_params
from dynlab.physical import survey_basins

params = default_params("ex1")

rep = survey_basins("6x6x2", None, 200_000, 1000, 1e-2, params, seed=0)
print(rep.k_clusters, rep.basin_fractions, rep.unresolved_fraction)
print(np.percentile(rep.conv_gap, [50, 90, 99]))

# the deformed map has a bump at the fixed point but still one basin here
deformed = default_params("ex1", mu=1.0, n_power=2)
rep = survey_basins("4x4x2", None, 100_000, 1000, 1e-2, deformed, seed=0, deformed=True)
print(rep.k_clusters, rep.basin_fractions)
