"""Non-asymptotic FDR bounds for the nested penalized selection.

For ``D* < q`` the FDR of the selected model factorizes as

    FDR(K) = sum_{r=D*+1}^{q} (r - D*)/r * P_r(K) * Q_r(K, beta*, sigma2)

where ``P_r`` only involves standard Gaussian vectors (estimated here by
Monte Carlo) and ``Q_r`` depends on the signal. ``Q_r`` is bracketed by a
recursive Gaussian-CDF lower term and a chi-squared upper term, giving the
computable curves ``b(K) <= FDR(K) <= B(K)`` and the sigma-free floor.

Grids of K are handled as arrays throughout; each ``P_r`` is estimated once
per grid with common random numbers so it is nondecreasing in K.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from . import _io, _rng
from .errors import DomainError
from .linmodel import GroundTruth, OrthoModel
from .numerics import chi2_sf, gaussian_sf

__all__ = [
    "DEFAULT_MC_SAMPLES",
    "BoundInput",
    "PrTable",
    "BoundCurve",
    "bound_input_orthogonal",
    "bound_input_from_model",
    "pr_monte_carlo",
    "pr_table",
    "lower_recursion",
    "lower_terms",
    "upper_all",
    "upper_terms",
    "floor_terms",
    "log_floor_terms",
    "bound_curve",
    "qr_monte_carlo",
    "fdr_factorized",
]

DEFAULT_MC_SAMPLES = 5000


@dataclass(frozen=True)
class BoundInput:
    """Everything the bounds need: ``<X beta*, u_k>`` for ``k <= D*``, sigma2, D*, q."""

    signal_coef: np.ndarray
    sigma2: float
    d_star: int
    q: int

    def __post_init__(self):
        coef = np.array(self.signal_coef, dtype=float).reshape(-1)
        coef.flags.writeable = False
        object.__setattr__(self, "signal_coef", coef)
        if not self.sigma2 > 0:
            raise DomainError("sigma2 must be positive")
        if self.q < 1:
            raise DomainError("q must be at least 1")
        if not 0 <= self.d_star <= self.q:
            raise DomainError(f"d_star must lie in [0, q={self.q}]")
        if coef.shape[0] != self.d_star:
            raise DomainError(f"expected {self.d_star} signal coefficients, got {coef.shape[0]}")

    @property
    def saturated(self) -> bool:
        return self.d_star == self.q


def bound_input_orthogonal(beta_star, sigma2: float, q: int) -> BoundInput:
    """Orthonormal design: the projections are the coefficients themselves."""
    truth = GroundTruth(np.asarray(beta_star, dtype=float), sigma2)
    d = truth.d_star
    return BoundInput(truth.beta_star[:d], sigma2, d, q)


def bound_input_from_model(model: OrthoModel, truth: GroundTruth) -> BoundInput:
    """Projections ``<X beta*, u_k>`` through the Gram-Schmidt factor.

    ``X[:, :q] = U R`` so ``U^T X beta* = R beta*[:q]`` when the support of
    ``beta*`` lies in the first q coordinates.
    """
    d = truth.d_star
    if d > model.q:
        raise DomainError("true dimension exceeds q")
    proj = model.R @ truth.beta_star[: model.q]
    return BoundInput(proj[:d], truth.sigma2, d, model.q)


def _grid(k_grid) -> np.ndarray:
    k = np.atleast_1d(np.asarray(k_grid, dtype=float))
    if k.ndim != 1 or k.size == 0:
        raise DomainError("K grid must be a nonempty vector")
    if not np.all(np.isfinite(k)) or np.any(k <= 0):
        raise DomainError("K values must be positive and finite")
    return k


def _pr_statistic(r: int, q: int, mc_samples: int, seed: int) -> np.ndarray:
    """Sorted ``max_l (sum_{k=r+1}^{l} Z_k^2)/(l - r)``; P_r(K) = P(stat < K)."""
    rng = _rng.stream(seed, _rng.PR, r)
    z2 = rng.standard_normal((mc_samples, q - r)) ** 2
    stat = (np.cumsum(z2, axis=1) / np.arange(1, q - r + 1)).max(axis=1)
    return np.sort(stat)


def pr_monte_carlo(r: int, q: int, k_grid, mc_samples: int = DEFAULT_MC_SAMPLES,
                   seed: int = 0) -> np.ndarray:
    """Monte-Carlo estimate of ``P_r(K)`` on a grid of K.

    A draw of ``(Z_{r+1}, ..., Z_q)`` satisfies every partial-sum constraint
    ``sum_{k=r+1}^{l} Z_k^2 < K (l - r)`` iff its largest running mean of
    squares is below K, so one set of draws serves the whole grid.
    Each r has its own stream derived from ``(seed, r)``.
    """
    k = _grid(k_grid)
    if not 0 <= r <= q:
        raise DomainError(f"r must lie in [0, q={q}]")
    if mc_samples < 1:
        raise DomainError("mc_samples must be positive")
    if r == q:
        return np.ones_like(k)
    stat = _pr_statistic(r, q, mc_samples, seed)
    return np.searchsorted(stat, k, side="left") / mc_samples


@dataclass(frozen=True)
class PrTable:
    """``values[r, i] = P_r(k_grid[i])`` for ``r_min <= r <= q`` (other rows NaN)."""

    k_grid: np.ndarray
    values: np.ndarray
    mc_samples: int
    seed: int
    q: int
    r_min: int = 1

    def row(self, r: int) -> np.ndarray:
        if not self.r_min <= r <= self.q:
            raise DomainError(f"table covers r in [{self.r_min}, {self.q}], not {r}")
        return self.values[r]


def pr_table(q: int, k_grid, mc_samples: int = DEFAULT_MC_SAMPLES, seed: int = 0,
             r_min: int = 1, threads: int | None = None) -> PrTable:
    """Estimate every ``P_r`` for ``r_min <= r <= q`` on a common grid.

    Rows are independent streams derived from ``(seed, r)``, so the table is
    identical whatever the number of worker threads.
    """
    k = _grid(k_grid)
    if not 0 <= r_min <= q:
        raise DomainError("r_min must lie in [0, q]")
    rows = list(range(r_min, q + 1))

    def one(r):
        return pr_monte_carlo(r, q, k, mc_samples, seed)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            computed = list(pool.map(one, rows))
    else:
        computed = [one(r) for r in rows]
    values = np.full((q + 1, k.size), np.nan)
    for r, v in zip(rows, computed):
        values[r] = v
    values.flags.writeable = False
    k = k.copy()
    k.flags.writeable = False
    return PrTable(k, values, int(mc_samples), int(seed), int(q), int(r_min))


@lru_cache(maxsize=32)
def _cached_pr_table(q, k_tuple, mc_samples, seed):
    return pr_table(q, np.array(k_tuple), mc_samples, seed)


def cached_pr_table(q: int, k_grid, mc_samples: int = DEFAULT_MC_SAMPLES, seed: int = 0) -> PrTable:
    """Memoized :func:`pr_table` (``r_min = 1``); P_r does not depend on data."""
    k = _grid(k_grid)
    return _cached_pr_table(int(q), tuple(float(x) for x in k), int(mc_samples), int(seed))


def _scaled_signal(inp: BoundInput) -> np.ndarray:
    a = np.zeros(inp.q)
    a[: inp.d_star] = inp.signal_coef / np.sqrt(inp.sigma2)
    return a


def lower_recursion(inp: BoundInput, k_grid) -> np.ndarray:
    """All lower terms at once: row ``l - 1`` holds ``f_low_l(K)`` for ``l = 1..q``.

    ``G_l`` is the probability that ``<Y, u_l>^2`` exceeds ``l K sigma2`` and
    ``H_l`` the probability that it falls in ``(K sigma2, l K sigma2]``;
    ``f_1 = G_1`` and ``f_l = G_l + H_l f_{l-1}``. The signal-free expressions
    are the ``a_l = 0`` case of the same formulas. Tails are evaluated with
    the survival function so nothing cancels at large K.
    """
    k = _grid(k_grid)
    a = _scaled_signal(inp)[:, None]
    ell = np.arange(1, inp.q + 1)[:, None]
    s_ell = np.sqrt(ell * k[None, :])
    s_one = np.sqrt(k)[None, :]
    sf_hi_m = gaussian_sf(s_ell - a)
    sf_hi_p = gaussian_sf(s_ell + a)
    G = np.clip(sf_hi_m + sf_hi_p, 0.0, 1.0)
    H = (gaussian_sf(s_one - a) - sf_hi_m) + (gaussian_sf(s_one + a) - sf_hi_p)
    H = np.clip(H, 0.0, 1.0)
    f = np.empty_like(G)
    f[0] = G[0]
    for i in range(1, inp.q):
        f[i] = G[i] + H[i] * f[i - 1]
    return np.clip(f, 0.0, 1.0)


def _check_r(inp: BoundInput, r: int):
    if not inp.d_star < r <= inp.q:
        raise DomainError(f"r must lie in ({inp.d_star}, {inp.q}]")


def lower_terms(inp: BoundInput, r: int, K):
    """``f_low_r(K)``, the recursive lower bound on ``Q_r``."""
    _check_r(inp, r)
    out = lower_recursion(inp, K)[r - 1]
    return float(out[0]) if np.ndim(K) == 0 else out


def upper_all(inp: BoundInput, k_grid) -> np.ndarray:
    """Upper terms for ``r = D*+1..q``: row ``r - D* - 1`` holds ``f_up_r(K)``.

    ``f_up_r = 1 - max(...)`` is evaluated as the minimum of chi-squared
    survival probabilities: pure-noise partial sums at ``l K`` for
    ``l <= r - D*`` and signal-shifted ones at ``l K / 2 - S`` for the rest,
    ``S`` being the sum of the last squared scaled signal coefficients.
    """
    k = _grid(k_grid)
    d, q = inp.d_star, inp.q
    m = np.arange(1, q - d + 1)  # m = r - D*
    noise = chi2_sf(m[:, None], m[:, None] * k[None, :])
    f = np.minimum.accumulate(noise, axis=0)
    if d > 0:
        a2 = inp.signal_coef ** 2 / inp.sigma2
        # tail[i-1] = sum of the last i squared coefficients, i = 1..D*
        tail = np.cumsum(a2[::-1])
        i = np.arange(1, d + 1)
        dof = m[:, None] + i[None, :]
        arg = dof[:, :, None] * k[None, None, :] / 2.0 - tail[None, :, None]
        shifted = chi2_sf(np.broadcast_to(dof[:, :, None], arg.shape), arg)
        f = np.minimum(f, shifted.min(axis=1))
    return f


def upper_terms(inp: BoundInput, r: int, K):
    """``f_up_r(K)``, the chi-squared upper bound on ``Q_r``."""
    _check_r(inp, r)
    out = upper_all(inp, K)[r - inp.d_star - 1]
    return float(out[0]) if np.ndim(K) == 0 else out


def log_floor_terms(r, K):
    """Logarithm of :func:`floor_terms`; finite where the terms themselves underflow."""
    rk = np.asarray(r, dtype=float) * np.asarray(K, dtype=float)
    return (np.log(2.0 * np.sqrt(2.0) / np.sqrt(np.pi))
            - np.log(np.sqrt(rk) + np.sqrt(rk + 4.0)) - rk / 2.0)


def floor_terms(r, K):
    """Sigma-free lower bound on ``G_r = erfc(sqrt(rK/2))`` from the erfc bracket."""
    return np.exp(log_floor_terms(r, K))


@dataclass(frozen=True)
class BoundCurve:
    """Lower bound ``b``, upper bound ``B`` and floor on a K grid.

    ``lower_se`` and ``upper_se`` are the Monte-Carlo standard errors carried
    over from the shared ``P_r`` estimates. ``log_floor`` keeps the floor
    representable at large K, where ``floor`` itself underflows to 0.
    """

    k_grid: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    floor: np.ndarray
    lower_se: np.ndarray = field(repr=False)
    upper_se: np.ndarray = field(repr=False)
    d_star: int = 0
    sigma2: float = 1.0
    mc_samples: int = 0
    seed: int = 0
    log_floor: np.ndarray | None = field(default=None, repr=False)

    def to_csv(self, path) -> Path:
        return _io.write_csv(path, ["K", "b", "B", "floor"],
                             [self.k_grid, self.lower, self.upper, self.floor])

    def to_dict(self) -> dict:
        return {
            "K": self.k_grid,
            "b": self.lower,
            "B": self.upper,
            "floor": self.floor,
            "b_se": self.lower_se,
            "B_se": self.upper_se,
            "provenance": {
                "seed": self.seed,
                "mcSamples": self.mc_samples,
                "dStar": self.d_star,
                "sigma2": self.sigma2,
            },
        }

    def to_json(self, path) -> Path:
        return _io.write_json(path, self.to_dict())


def bound_curve(inp: BoundInput, k_grid, pr: PrTable | None = None,
                upper_only: bool = False) -> BoundCurve:
    """Assemble ``b``, ``B`` and the floor from per-r terms and a shared ``P_r`` table.

    When ``pr`` is omitted a memoized table with the default sample size and
    seed 0 is used. ``upper_only`` skips the lower recursion (its entries are
    then NaN), which is all calibration needs.
    """
    k = _grid(k_grid)
    nan = np.full(k.size, np.nan)
    if inp.saturated:
        zeros = np.zeros(k.size)
        mc = pr.mc_samples if pr is not None else 0
        seed = pr.seed if pr is not None else 0
        return BoundCurve(k, zeros, zeros.copy(), zeros.copy(), zeros.copy(), zeros.copy(),
                          inp.d_star, inp.sigma2, mc, seed, np.full(k.size, -np.inf))
    if pr is None:
        pr = cached_pr_table(inp.q, k)
    if pr.k_grid.shape != k.shape or not np.array_equal(pr.k_grid, k):
        raise DomainError("P_r table was computed on a different K grid")
    if pr.q != inp.q or pr.r_min > inp.d_star + 1:
        raise DomainError("P_r table does not cover r in (d_star, q]")

    r = np.arange(inp.d_star + 1, inp.q + 1)
    w = ((r - inp.d_star) / r)[:, None]
    P = pr.values[r]
    var_p = P * (1.0 - P) / pr.mc_samples

    f_up = upper_all(inp, k)
    upper = (w * P * f_up).sum(axis=0)
    upper_se = np.sqrt((w ** 2 * f_up ** 2 * var_p).sum(axis=0))
    with np.errstate(divide="ignore"):
        log_terms = np.log(w * P) + log_floor_terms(r[:, None], k[None, :])
    log_floor = logsumexp(log_terms, axis=0)
    floor = np.exp(log_floor)
    if upper_only:
        lower, lower_se = nan, nan.copy()
    else:
        f_low = lower_recursion(inp, k)[r - 1]
        lower = (w * P * f_low).sum(axis=0)
        lower_se = np.sqrt((w ** 2 * f_low ** 2 * var_p).sum(axis=0))
    return BoundCurve(k, lower, upper, floor, lower_se, upper_se,
                      inp.d_star, float(inp.sigma2), pr.mc_samples, pr.seed, log_floor)


def _qr_statistic(inp: BoundInput, r: int, mc_samples: int, seed: int) -> np.ndarray:
    """Sorted ``min_l (sum_{k=l+1}^{r} <Y,u_k>^2) / (sigma2 (r - l))``; Q_r = P(stat > K)."""
    rng = _rng.stream(seed, _rng.QR, r)
    sigma = np.sqrt(inp.sigma2)
    mean = np.zeros(r)
    d = min(inp.d_star, r)
    mean[:d] = inp.signal_coef[:d]
    y = mean[None, :] + sigma * rng.standard_normal((mc_samples, r))
    c = y ** 2
    suffix = np.cumsum(c[:, ::-1], axis=1)  # suffix[:, j] sums the last j+1 terms
    stat = (suffix / (inp.sigma2 * np.arange(1, r + 1))).min(axis=1)
    return np.sort(stat)


def qr_monte_carlo(inp: BoundInput, r: int, K, mc_samples: int = DEFAULT_MC_SAMPLES,
                   seed: int = 0):
    """Monte-Carlo estimate of ``Q_r(K)``: every tail sum ``sum_{k=l+1}^{r} <Y,u_k>^2``
    must exceed ``K sigma2 (r - l)``. Coefficients are drawn from
    ``N(signal_k, sigma2)`` (zero mean beyond D*); the stream is independent of the ``P_r`` one.
    """
    _check_r(inp, r)
    if mc_samples < 1:
        raise DomainError("mc_samples must be positive")
    k = _grid(K)
    stat = _qr_statistic(inp, r, mc_samples, seed)
    out = 1.0 - np.searchsorted(stat, k, side="right") / mc_samples
    return float(out[0]) if np.ndim(K) == 0 else out


def fdr_factorized(inp: BoundInput, K, mc_samples: int = DEFAULT_MC_SAMPLES, seed: int = 0,
                   return_se: bool = False, pr_scale: float = 1.0):
    """``sum_r (r - D*)/r * P_r(K) * Q_r(K)`` with independent Monte-Carlo streams.

    Parameters
    ----------
    return_se : bool
        Also return the delta-method standard error of the estimate.
    pr_scale : float
        Multiplies every ``P_r`` estimate. Fault-injection hook for the
        verification command; leave at 1.
    """
    if inp.saturated:
        raise DomainError("the factorization requires d_star < q")
    k = _grid(K)
    total = np.zeros(k.size)
    var = np.zeros(k.size)
    for r in range(inp.d_star + 1, inp.q + 1):
        w = (r - inp.d_star) / r
        P = pr_scale * pr_monte_carlo(r, inp.q, k, mc_samples, seed)
        Q = qr_monte_carlo(inp, r, k, mc_samples, seed)
        vp = P * (1 - P) / mc_samples if r < inp.q else 0.0
        vq = Q * (1 - Q) / mc_samples
        total += w * P * Q
        var += w ** 2 * (P ** 2 * vq + Q ** 2 * vp + vp * vq)
    scalar = np.ndim(K) == 0
    est = float(total[0]) if scalar else total
    if return_se:
        se = np.sqrt(var)
        return est, (float(se[0]) if scalar else se)
    return est
