"""Choose K from the data: smallest grid value whose estimated FDR bound is below
``alpha`` while the predictions stay within ``gamma * sigma2_hat`` of the K=2 fit."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _io
from .errors import CalibrationFailed, DomainError, SaturatedModelError
from .estimation import PluginEstimate, diff_pr_curve
from .fdrbounds import DEFAULT_MC_SAMPLES, BoundCurve, BoundInput, bound_curve, cached_pr_table
from .linmodel import OrthoModel

__all__ = [
    "default_k_grid",
    "CalibrationConfig",
    "CalibrationResult",
    "plugin_bound_input",
    "calibrate",
    "index_intervals",
]


def default_k_grid(lo: float = 2.0, hi: float = 10.0, step: float = 0.1) -> np.ndarray:
    """Evenly spaced grid, rounded so that e.g. 3.3 is stored as the nearest double to 3.3."""
    n = int(round((hi - lo) / step))
    return np.round(lo + step * np.arange(n + 1), 10)


@dataclass(frozen=True)
class CalibrationConfig:
    alpha: float = 0.05
    gamma: float = 0.1
    k_grid: np.ndarray = field(default_factory=default_k_grid)
    mc_samples: int = DEFAULT_MC_SAMPLES
    seed: int = 0

    def __post_init__(self):
        k = np.asarray(self.k_grid, dtype=float).reshape(-1)
        if k.size == 0:
            raise DomainError("K grid must be nonempty")
        if np.any(np.diff(k) <= 0):
            raise DomainError("K grid must be strictly increasing")
        if k[0] < 2:
            raise DomainError("K grid must start at 2 or above")
        if not 0 < self.alpha < 1:
            raise DomainError("alpha must lie in (0, 1)")
        if not self.gamma > 0:
            raise DomainError("gamma must be positive")
        if self.mc_samples < 1:
            raise DomainError("mc_samples must be positive")
        k.flags.writeable = False
        object.__setattr__(self, "k_grid", k)


@dataclass(frozen=True)
class CalibrationResult:
    """Selected ``k_star`` plus the index sets and curves behind it."""

    k_star: float
    i1: np.ndarray
    i2: np.ndarray
    fallback_used: bool
    bound_at_k: float
    diff_pr_at_k: float
    config: CalibrationConfig = field(repr=False)
    curve: BoundCurve = field(repr=False)
    diff_pr: np.ndarray = field(repr=False)
    sigma2_hat: float = 1.0
    d_hat: int = 0

    def to_dict(self) -> dict:
        k = self.config.k_grid
        return {
            "kStar": self.k_star,
            "I1": index_intervals(k, self.i1),
            "I2": index_intervals(k, self.i2),
            "alpha": self.config.alpha,
            "gamma": self.config.gamma,
            "fallbackUsed": self.fallback_used,
            "boundAtK": self.bound_at_k,
            "diffPrAtK": self.diff_pr_at_k,
            "sigma2Hat": self.sigma2_hat,
            "dHat": self.d_hat,
            "provenance": {
                "seed": self.config.seed,
                "mcSamples": self.config.mc_samples,
                "kGrid": k,
            },
        }

    def to_json(self, path):
        return _io.write_json(path, self.to_dict())


def index_intervals(k_grid, idx) -> list[list[float]]:
    """Maximal runs of consecutive grid indices, as ``[K_first, K_last]`` pairs."""
    idx = np.sort(np.asarray(idx, dtype=int))
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate([[idx[0]], idx[breaks + 1]])
    ends = np.concatenate([idx[breaks], [idx[-1]]])
    k = np.asarray(k_grid)
    return [[float(k[s]), float(k[e])] for s, e in zip(starts, ends)]


def plugin_bound_input(model: OrthoModel, plugin: PluginEstimate) -> BoundInput:
    """Bound input with ``beta_hat4`` in place of ``beta*``.

    ``X beta_hat4`` is the projection of ``Y`` on ``m_dHat``, so its
    coordinates in the orthonormal basis are the first ``dHat`` coefficients
    of ``Y``.
    """
    if plugin.d_hat >= model.q:
        raise SaturatedModelError(
            f"estimated dimension {plugin.d_hat} equals q={model.q}; the FDR bound is identically 0"
        )
    return BoundInput(model.y_coef[: plugin.d_hat], plugin.sigma2_hat, plugin.d_hat, model.q)


def calibrate(model: OrthoModel, plugin: PluginEstimate,
              cfg: CalibrationConfig | None = None) -> CalibrationResult:
    """Grid version of the calibration rule.

    ``I1`` holds the grid points where the plug-in upper bound lies in
    ``(0, alpha)``, ``I2`` those whose prediction gap to the K=2 fit is below
    ``gamma * sigma2_hat``. Returns ``min(I1 & I2)``, or ``min(I1)`` with
    ``fallback_used`` set when the intersection is empty.

    Raises
    ------
    SaturatedModelError
        If ``plugin.d_hat == q``.
    CalibrationFailed
        If ``I1`` is empty; the evaluated curves are attached.
    """
    cfg = cfg or CalibrationConfig()
    inp = plugin_bound_input(model, plugin)
    k = cfg.k_grid
    pr = cached_pr_table(model.q, k, cfg.mc_samples, cfg.seed)
    curve = bound_curve(inp, k, pr, upper_only=True)
    gap = diff_pr_curve(model, plugin.sigma2_hat, k)

    i1 = np.flatnonzero((curve.upper > 0) & (curve.upper < cfg.alpha))
    i2 = np.flatnonzero(gap < cfg.gamma * plugin.sigma2_hat)
    if i1.size == 0:
        raise CalibrationFailed(
            f"estimated FDR bound never drops below alpha={cfg.alpha} on the grid "
            f"(minimum {curve.upper.min():.4g}); raise alpha or extend the grid",
            curve=curve,
            diff_pr=gap,
        )
    both = np.intersect1d(i1, i2)
    fallback = both.size == 0
    j = int(i1[0] if fallback else both[0])
    return CalibrationResult(
        k_star=float(k[j]),
        i1=i1,
        i2=i2,
        fallback_used=bool(fallback),
        bound_at_k=float(curve.upper[j]),
        diff_pr_at_k=float(gap[j]),
        config=cfg,
        curve=curve,
        diff_pr=gap,
        sigma2_hat=float(plugin.sigma2_hat),
        d_hat=int(plugin.d_hat),
    )
