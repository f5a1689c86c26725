"""Data-driven stand-ins for the unknown noise level, coefficients and true dimension."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFitError, DomainError
from .linmodel import Dataset, OrthoModel, rss_profile, select_dims, select_model

__all__ = [
    "PLUGIN_K",
    "PluginEstimate",
    "slope_sigma2",
    "residual_sigma2",
    "estimate_sigma2",
    "plugin_estimate",
    "diff_pr",
    "diff_pr_curve",
]

PLUGIN_K = 4.0
SIGMA2_FLOOR = 1e-12


@dataclass(frozen=True)
class PluginEstimate:
    """Plug-in triple: ``sigma2_hat``, the K=4 coefficients and their support size."""

    sigma2_hat: float
    beta_hat4: np.ndarray = field(repr=False)
    d_hat: int


def _window(q: int, window_fraction: float) -> np.ndarray:
    if not 0 < window_fraction <= 1:
        raise DomainError("window_fraction must lie in (0, 1]")
    start = math.ceil((1.0 - window_fraction) * q)
    dims = np.arange(start, q + 1)
    if dims.size < 3:
        raise DomainError(f"slope window holds {dims.size} dimensions, need at least 3")
    return dims


def slope_sigma2(model: OrthoModel, window_fraction: float = 0.5) -> float:
    """Slope-heuristic variance: minus n times the slope of ``RSS_j / n`` over the top dimensions.

    Beyond the true dimension ``E[RSS_j] = (n - j) sigma2``, so an affine
    least-squares fit over ``j >= ceil((1 - window_fraction) q)`` has slope
    ``-sigma2 / n``.

    Raises
    ------
    DegenerateFitError
        If the fitted slope is not negative.
    """
    if model.q < 4:
        raise DomainError("slope heuristic needs q >= 4")
    dims = _window(model.q, window_fraction)
    y = rss_profile(model)[dims] / model.n
    x = dims - dims.mean()
    slope = float(x @ (y - y.mean()) / (x @ x))
    if not slope < 0:
        raise DegenerateFitError(f"slope-heuristic fit has nonnegative slope {slope:.4g}")
    return max(-model.n * slope, SIGMA2_FLOOR)


def residual_sigma2(model: OrthoModel) -> float:
    """Unbiased residual variance ``RSS_q / (n - q)``; requires ``n > q + 10``."""
    if model.n <= model.q + 10:
        raise DomainError("residual variance estimator requires n > q + 10")
    return max(rss_profile(model)[-1] / (model.n - model.q), SIGMA2_FLOOR)


def estimate_sigma2(model: OrthoModel, method: str = "slope", window_fraction: float = 0.5) -> float:
    """Dispatch on ``method`` in ``{"slope", "residual"}``."""
    if method == "slope":
        return slope_sigma2(model, window_fraction)
    if method == "residual":
        return residual_sigma2(model)
    raise DomainError(f"unknown variance estimator {method!r}")


def plugin_estimate(model: OrthoModel, data: Dataset | None = None, window_fraction: float = 0.5,
                    k_plugin: float = PLUGIN_K, sigma2_method: str = "slope") -> PluginEstimate:
    """Estimate ``sigma2`` then select at ``K = k_plugin`` to get the plug-in coefficients.

    ``data`` is only used to check that it matches ``model``. A zero
    response makes the slope fit degenerate, and that error propagates.
    """
    if data is not None and (data.n != model.n or data.p != model.p):
        raise DomainError("dataset does not match the fitted model")
    s2 = estimate_sigma2(model, sigma2_method, window_fraction)
    sel = select_model(model, k_plugin, s2)
    return PluginEstimate(sigma2_hat=s2, beta_hat4=sel.beta_hat, d_hat=sel.dim)


def _gap(model: OrthoModel, d_a, d_b) -> np.ndarray:
    sq = np.concatenate([[0.0], np.cumsum(np.asarray(model.y_coef) ** 2)])
    lo, hi = np.minimum(d_a, d_b), np.maximum(d_a, d_b)
    return (sq[hi] - sq[lo]) / model.n


def diff_pr(model: OrthoModel, sigma2_hat: float, K: float) -> float:
    """``||X beta_hat(2) - X beta_hat(K)||^2 / n`` for one data set.

    The two fitted values are projections onto nested spans, so their
    difference only involves the coefficients between the two dimensions.
    """
    d2, dk = select_dims(model, [2.0, K], sigma2_hat)
    return float(_gap(model, d2, dk))


def diff_pr_curve(model: OrthoModel, sigma2_hat: float, k_grid) -> np.ndarray:
    """:func:`diff_pr` on a whole grid from one vectorized selection."""
    k = np.atleast_1d(np.asarray(k_grid, dtype=float))
    dims = select_dims(model, np.concatenate([[2.0], k]), sigma2_hat)
    return _gap(model, dims[0], dims[1:])
