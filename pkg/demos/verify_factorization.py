"""Factorized FDR against brute-force selection on a small orthonormal instance.

Run with ``python3 demos/verify_factorization.py``.
"""

from ordsel.fdrbounds import BoundInput, fdr_factorized
from ordsel.simulation import ScenarioSpec, empirical_curves

beta = (3.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
k = [1.0, 2.0, 4.0, 8.0]
inp = BoundInput(beta[:3], 1.0, 3, len(beta))
fact, se = fdr_factorized(inp, k, 100_000, 0, return_se=True)
sim = empirical_curves(ScenarioSpec("custom", n=8, p=8, beta=beta), k, 100_000, with_pr=False)

for K, f, s, e, es in zip(k, fact, se, sim.fdr, sim.fdr_se):
    print(f"K = {K:3.0f}: factorized {f:.4f} +/- {s:.4f}   simulated {e:.4f} +/- {es:.4f}")
