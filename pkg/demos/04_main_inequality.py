"""
Decay of the self term
======================

"""

from dynlab import default_params
from dynlab.measures import main_inequality_audit

params = default_params("ex1")
rep = main_inequality_audit(None, params, n_list=[1, 2, 3, 4], r=0.002)

for n, s, f, m in zip(rep.n_values, rep.self_term, rep.floor, rep.mid):
    print(n, s, f, m)

# slope of log(self / mid) against n
print("sigma_hat", rep.sigma_hat, "pass", rep.passed)
