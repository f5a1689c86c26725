"""Seeded scenario generator, empirical FDR/PR curves and the V-fold CV baseline.

Replicates share the design and ``beta*`` of their scenario seed and differ
only in the noise. All noise streams are derived from ``(seed, replicate)``,
so results do not depend on how replicates are batched or scheduled.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular

from . import _io, _rng
from .errors import DomainError, RankDeficiencyWarning
from .linmodel import (
    DEFAULT_RANK_TOL,
    Dataset,
    GroundTruth,
    SelectionResult,
    coefficients,
    fdp_from_dims,
    orthonormalize,
    rss_profile,
)

__all__ = [
    "SCENARIO_NAMES",
    "ScenarioSpec",
    "EmpiricalCurve",
    "toy_spec",
    "scenario_families",
    "make_beta_star",
    "make_design",
    "generate",
    "validation_response",
    "batch_select_dims",
    "empirical_curves",
    "vfold_cv_select",
]

SCENARIO_NAMES = ("sparsity", "complexity", "high-dimension", "noise", "toy", "custom")
DESIGNS = ("canonical", "gaussian")
CHUNK = 256


@dataclass(frozen=True)
class ScenarioSpec:
    """One simulation scenario.

    ``beta*`` is ``base`` at coordinate ``d_star`` and each earlier coordinate
    adds a ``Uniform(inc_low, inc_high)`` increment to the next one. A
    ``custom`` scenario may instead give ``beta`` explicitly.
    """

    name: str = "toy"
    n: int = 50
    p: int = 50
    d_star: int = 10
    sigma2: float = 1.0
    base: float = 2.0
    inc_low: float = 0.5
    inc_high: float = 1.5
    seed: int = 0
    design: str = "canonical"
    beta: tuple | None = None

    def __post_init__(self):
        if self.name not in SCENARIO_NAMES:
            raise DomainError(f"unknown scenario name {self.name!r}")
        if self.design not in DESIGNS:
            raise DomainError(f"design must be one of {DESIGNS}")
        if self.n < 1 or self.p < 1:
            raise DomainError("n and p must be positive")
        if not self.sigma2 > 0:
            raise DomainError("sigma2 must be positive")
        if self.seed < 0:
            raise DomainError("seed must be nonnegative")
        if self.beta is not None:
            beta = tuple(float(b) for b in self.beta)
            if len(beta) != self.p:
                raise DomainError(f"explicit beta must have p={self.p} entries")
            object.__setattr__(self, "beta", beta)
            d = GroundTruth(np.array(beta), self.sigma2).d_star
            object.__setattr__(self, "d_star", d)
        if not 0 <= self.d_star <= self.q:
            raise DomainError(f"d_star={self.d_star} exceeds min(n, p)={self.q}")
        if self.beta is None and self.d_star > 0:
            if not self.base > 0:
                raise DomainError("base coefficient must be positive")
            if not 0 <= self.inc_low <= self.inc_high:
                raise DomainError("increments need 0 <= inc_low <= inc_high")

    @property
    def q(self) -> int:
        return min(self.n, self.p)

    def to_dict(self) -> dict:
        return asdict(self)


def toy_spec(seed: int = 0, **overrides) -> ScenarioSpec:
    """Reference scenario: n = p = 50, D* = 10, beta*_10 = 2, increments in (0.5, 1.5)."""
    return replace(ScenarioSpec(seed=seed), **overrides)


def scenario_families(seed: int = 0) -> list[ScenarioSpec]:
    """The four scenario families (sparsity, complexity, high dimension, noise); p = 50."""
    specs = [ScenarioSpec("sparsity", d_star=d, seed=seed) for d in (1, 10, 20)]
    specs += [
        ScenarioSpec("complexity", base=2.0, inc_low=0.5, inc_high=1.5, seed=seed),
        ScenarioSpec("complexity", base=0.2, inc_low=0.05, inc_high=0.15, seed=seed),
        ScenarioSpec("complexity", base=2.0, inc_low=0.05, inc_high=0.15, seed=seed),
    ]
    specs += [ScenarioSpec("high-dimension", n=n, seed=seed) for n in (30, 50, 300)]
    specs += [ScenarioSpec("noise", sigma2=s2, seed=seed) for s2 in (0.1, 1.0, 4.0)]
    return specs


def make_beta_star(spec: ScenarioSpec) -> np.ndarray:
    """Decreasing positive coefficients on the first ``d_star`` coordinates, fixed by ``spec.seed``."""
    if spec.beta is not None:
        return np.array(spec.beta)
    beta = np.zeros(spec.p)
    if spec.d_star == 0:
        return beta
    rng = _rng.stream(spec.seed, _rng.BETA)
    beta[spec.d_star - 1] = spec.base
    for j in range(spec.d_star - 2, -1, -1):
        beta[j] = beta[j + 1] + rng.uniform(spec.inc_low, spec.inc_high)
    return beta


def make_design(spec: ScenarioSpec) -> np.ndarray:
    """Canonical design (first columns of the identity) or i.i.d. Gaussian entries.

    Both are built row by row, so the design for a smaller n is the leading
    rows of the design for a larger n.
    """
    if spec.design == "canonical":
        X = np.zeros((spec.n, spec.p))
        idx = np.arange(spec.q)
        X[idx, idx] = 1.0
        return X
    return _rng.stream(spec.seed, _rng.DESIGN).standard_normal((spec.n, spec.p))


def generate(spec: ScenarioSpec, replicate: int) -> tuple[Dataset, GroundTruth]:
    """Replicate ``replicate`` of the scenario: ``Y = X beta* + sigma eps``."""
    X = make_design(spec)
    beta = make_beta_star(spec)
    eps = _rng.stream(spec.seed, _rng.NOISE, replicate).standard_normal(spec.n)
    Y = X @ beta + np.sqrt(spec.sigma2) * eps
    return Dataset(Y=Y, X=X), GroundTruth(beta, spec.sigma2)


def validation_response(spec: ScenarioSpec, replicate: int, X=None, beta=None) -> np.ndarray:
    """Independent response on the same design, for out-of-sample error."""
    X = make_design(spec) if X is None else X
    beta = make_beta_star(spec) if beta is None else beta
    eps = _rng.stream(spec.seed, _rng.VALIDATION, replicate).standard_normal(spec.n)
    return X @ beta + np.sqrt(spec.sigma2) * eps


def _noise_block(spec, tag, start, stop):
    return np.stack([_rng.stream(spec.seed, tag, r).standard_normal(spec.n)
                     for r in range(start, stop)])


def batch_select_dims(y_coef: np.ndarray, resid_sq: np.ndarray, k_grid, sigma2: float) -> np.ndarray:
    """Selected dimension for each row of ``y_coef`` and each K (shape ``(rows, len(k_grid))``).

    Row-wise equivalent of :func:`ordsel.linmodel.select_dims`, same tie rule.
    """
    k = np.atleast_1d(np.asarray(k_grid, dtype=float))
    sq = y_coef ** 2
    tail = np.concatenate([np.cumsum(sq[:, ::-1], axis=1)[:, ::-1],
                           np.zeros((sq.shape[0], 1))], axis=1)
    rss = resid_sq[:, None] + tail
    dims = np.arange(y_coef.shape[1] + 1)
    crit = rss[:, :, None] + sigma2 * dims[None, :, None] * k[None, None, :]
    return np.argmin(crit, axis=1)


@dataclass(frozen=True)
class EmpiricalCurve:
    """Replicate averages per K with 95% CLT half-widths.

    ``pr_oracle`` averages the conditional expectation of the validation
    error given the training fit, ``||X beta* - X beta_hat||^2 / n + sigma2``.
    """

    k_grid: np.ndarray
    fdr: np.ndarray
    pr: np.ndarray
    fdr_ci: np.ndarray
    pr_ci: np.ndarray
    replicates: int
    mean_dim: np.ndarray = field(repr=False)
    pr_oracle: np.ndarray = field(repr=False)
    spec: ScenarioSpec = field(repr=False, default=None)

    @property
    def fdr_se(self) -> np.ndarray:
        return self.fdr_ci / 1.96

    @property
    def pr_se(self) -> np.ndarray:
        return self.pr_ci / 1.96

    def to_csv(self, path):
        return _io.write_csv(path, ["K", "fdr", "fdr_ci", "pr", "pr_ci"],
                             [self.k_grid, self.fdr, self.fdr_ci, self.pr, self.pr_ci])

    def to_dict(self) -> dict:
        return {
            "K": self.k_grid,
            "fdr": self.fdr,
            "fdr_ci": self.fdr_ci,
            "pr": self.pr,
            "pr_ci": self.pr_ci,
            "meanDim": self.mean_dim,
            "replicates": self.replicates,
            "provenance": {"spec": self.spec.to_dict() if self.spec else None},
        }

    def to_json(self, path):
        return _io.write_json(path, self.to_dict())


def _half_width(samples: np.ndarray) -> np.ndarray:
    return 1.96 * samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])


def empirical_curves(spec: ScenarioSpec, k_grid, replicates: int, threads: int | None = None,
                     with_pr: bool = True) -> EmpiricalCurve:
    """Average FDP and validation MSE over ``replicates`` data sets, per K.

    Selection uses the true ``sigma2``. The design is orthonormalized once;
    each replicate only needs its projection coefficients, and the
    validation error is assembled in the same basis.
    """
    if replicates < 2:
        raise DomainError("need at least 2 replicates for a confidence interval")
    k = np.atleast_1d(np.asarray(k_grid, dtype=float))
    if np.any(k <= 0):
        raise DomainError("K values must be positive")
    X = make_design(spec)
    beta = make_beta_star(spec)
    model = orthonormalize(Dataset(Y=np.zeros(spec.n), X=X))
    U = np.asarray(model.U)
    mean = X @ beta
    mean_coef = U.T @ mean
    sigma = np.sqrt(spec.sigma2)

    def run(bounds):
        start, stop = bounds
        Y = mean[None, :] + sigma * _noise_block(spec, _rng.NOISE, start, stop)
        coef = Y @ U
        resid = Y - coef @ U.T
        dims = batch_select_dims(coef, (resid ** 2).sum(axis=1), k, spec.sigma2)
        fdp = fdp_from_dims(dims, spec.d_star)
        if not with_pr:
            return fdp, dims, None, None
        Yv = mean[None, :] + sigma * _noise_block(spec, _rng.VALIDATION, start, stop)
        vcoef = Yv @ U
        vres = Yv - vcoef @ U.T
        vperp = (vres ** 2).sum(axis=1)
        # ||Yv - U[:, :d] coef[:d]||^2 = perp + sum_{k<=d} (vcoef - coef)^2 + sum_{k>d} vcoef^2
        head = np.concatenate([np.zeros((len(Y), 1)), np.cumsum((vcoef - coef) ** 2, axis=1)], axis=1)
        vsq = vcoef ** 2
        tail = np.concatenate([np.cumsum(vsq[:, ::-1], axis=1)[:, ::-1], np.zeros((len(Y), 1))], axis=1)
        rows = np.arange(len(Y))[:, None]
        mse = (vperp[:, None] + head[rows, dims] + tail[rows, dims]) / spec.n
        # conditional risk: bias of the fit plus one noise variance
        bias_head = np.concatenate([np.zeros((len(Y), 1)), np.cumsum((mean_coef - coef) ** 2, axis=1)], axis=1)
        msq = mean_coef ** 2
        bias_tail = np.concatenate([np.cumsum(msq[::-1])[::-1], [0.0]])
        mean_perp = float(((mean - U @ mean_coef) ** 2).sum())
        oracle = (mean_perp + bias_head[rows, dims] + bias_tail[dims]) / spec.n + spec.sigma2
        return fdp, dims, mse, oracle

    blocks = [(s, min(s + CHUNK, replicates)) for s in range(0, replicates, CHUNK)]
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, blocks))
    else:
        parts = [run(b) for b in blocks]
    fdp = np.concatenate([p[0] for p in parts])
    dims = np.concatenate([p[1] for p in parts])
    if with_pr:
        mse = np.concatenate([p[2] for p in parts])
        oracle = np.concatenate([p[3] for p in parts])
        pr, pr_ci, pr_or = mse.mean(axis=0), _half_width(mse), oracle.mean(axis=0)
    else:
        pr = pr_ci = pr_or = np.full(k.size, np.nan)
    return EmpiricalCurve(
        k_grid=k,
        fdr=fdp.mean(axis=0),
        pr=pr,
        fdr_ci=_half_width(fdp),
        pr_ci=pr_ci,
        replicates=replicates,
        mean_dim=dims.mean(axis=0),
        pr_oracle=pr_or,
        spec=spec,
    )


def _fold_errors(X, Y, train, test, q, tol):
    """Held-out squared error per dimension; NaN where the training design is rank deficient."""
    Xtr = X[train, :q]
    Qm, Rm = np.linalg.qr(Xtr, mode="reduced")
    rank_cap = Rm.shape[0]
    norms = np.linalg.norm(Xtr, axis=0)
    diag = np.abs(np.diagonal(Rm))
    ok = (diag >= tol * norms[:rank_cap]) & (norms[:rank_cap] > 0)
    usable = rank_cap if ok.all() else int(np.argmin(ok))
    proj = Qm.T @ Y[train]
    errs = np.full(q + 1, np.nan)
    errs[0] = np.mean(Y[test] ** 2)
    for j in range(1, usable + 1):
        b = solve_triangular(Rm[:j, :j], proj[:j], lower=False)
        r = Y[test] - X[np.ix_(test, np.arange(j))] @ b
        errs[j] = np.mean(r ** 2)
    return errs


def vfold_cv_select(data: Dataset, folds: int, seed: int = 0,
                    tol: float = DEFAULT_RANK_TOL) -> SelectionResult:
    """V-fold cross-validation over the nested collection.

    Rows are permuted with ``seed`` and cut into contiguous folds. A
    dimension whose training design is rank deficient in some fold is left
    out of that fold's average; dimensions with no usable fold are not
    candidates. The winner is refit on the full data.
    """
    if not 2 <= folds <= data.n:
        raise DomainError(f"folds must lie in [2, n={data.n}]")
    q = data.q
    X, Y = np.asarray(data.X), np.asarray(data.Y)
    perm = _rng.stream(seed, _rng.FOLDS).permutation(data.n)
    errs = np.array([
        _fold_errors(X, Y, np.setdiff1d(perm, test), test, q, tol)
        for test in np.array_split(perm, folds)
    ])
    skipped = np.isnan(errs)
    if skipped.any():
        warnings.warn(
            f"rank-deficient training designs: {int(skipped.sum())} (fold, dimension) pairs skipped",
            RankDeficiencyWarning,
            stacklevel=2,
        )
    counts = (~skipped).sum(axis=0)
    totals = np.where(skipped, 0.0, errs).sum(axis=0)
    score = np.where(counts > 0, totals / np.maximum(counts, 1), np.inf)
    dim = int(np.argmin(score))
    model = orthonormalize(data, tol)
    return SelectionResult(K=None, dim=dim, rss=float(rss_profile(model)[dim]),
                           beta_hat=coefficients(model, dim))
