"""Calibrate K on one toy data set and compare the selected model with K = 2.

Run with ``python3 demos/toy_calibration.py [replicate]``.
"""

import sys

from ordsel.calibration import calibrate
from ordsel.estimation import plugin_estimate
from ordsel.linmodel import fdp, mse, orthonormalize, select_model
from ordsel.simulation import generate, toy_spec, validation_response

spec = toy_spec(0)
r = int(sys.argv[1]) if len(sys.argv) > 1 else 0
data, truth = generate(spec, r)
model = orthonormalize(data)
plugin = plugin_estimate(model, data)
res = calibrate(model, plugin)
d = res.to_dict()

print(f"sigma2_hat = {plugin.sigma2_hat:.3f}, dHat = {plugin.d_hat}")
print(f"I1 = {d['I1']}, I2 = {d['I2']}")
print(f"kStar = {res.k_star} (fallback: {res.fallback_used}), B(kStar) = {res.bound_at_k:.4f}")

yv = validation_response(spec, r, data.X)
for K, s2 in ((2.0, plugin.sigma2_hat), (res.k_star, plugin.sigma2_hat)):
    sel = select_model(model, K, s2)
    print(f"K = {K:4.1f}: dim {sel.dim:2d}, FDP {fdp(sel, truth):.3f}, "
          f"validation MSE {mse(sel, yv, data.X):.3f}")
