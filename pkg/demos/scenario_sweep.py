"""Simulated FDR and predictive risk at K = 2 and K = 4 for every scenario family.

Run with ``python3 demos/scenario_sweep.py``.
"""

from ordsel.simulation import empirical_curves, scenario_families

print(f"{'scenario':<15} {'D':>3} {'n':>4} {'sigma2':>6}   FDR(2)  FDR(4)   PR(2)   PR(4)")
for spec in scenario_families(0):
    c = empirical_curves(spec, [2.0, 4.0], 1000)
    print(f"{spec.name:<15} {spec.d_star:3d} {spec.n:4d} {spec.sigma2:6.1f}   "
          f"{c.fdr[0]:.3f}   {c.fdr[1]:.3f}   {c.pr[0]:6.3f}  {c.pr[1]:6.3f}")
