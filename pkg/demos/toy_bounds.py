"""FDR bounds on the toy scenario next to the simulated FDR.

Run with ``python3 demos/toy_bounds.py``.
"""

import numpy as np

from ordsel.fdrbounds import bound_input_orthogonal, bound_curve, pr_table
from ordsel.simulation import empirical_curves, make_beta_star, toy_spec

spec = toy_spec(0)
k = np.arange(2.0, 10.01, 1.0)
inp = bound_input_orthogonal(make_beta_star(spec), spec.sigma2, spec.q)
bounds = bound_curve(inp, k, pr_table(spec.q, k, 5000, 0, r_min=inp.d_star + 1))
sim = empirical_curves(spec, k, 2000, with_pr=False)

print(f"{'K':>4} {'floor':>10} {'b':>10} {'FDR':>10} {'B':>10}")
for row in zip(k, bounds.floor, bounds.lower, sim.fdr, bounds.upper):
    print(f"{row[0]:4.1f} " + " ".join(f"{v:10.3g}" for v in row[1:]))
