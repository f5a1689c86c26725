"""Least squares over the nested collection m_0 ⊂ m_1 ⊂ ... ⊂ m_q.

Everything flows through one decomposition of the first ``q = min(n, p)``
design columns, ``X[:, :q] = U R`` with orthonormal ``U``. Fitting the model
``m_j = span(X_1, ..., X_j)`` then amounts to keeping the first ``j``
projection coefficients ``<Y, u_k>``; residual sums of squares, penalized
criteria and fitted values are all cumulative sums of those coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DomainError, RankDeficiencyError

__all__ = [
    "Dataset",
    "OrthoModel",
    "SelectionResult",
    "GroundTruth",
    "orthonormalize",
    "fit",
    "rss_profile",
    "criterion",
    "select_model",
    "select_dims",
    "coefficients",
    "fdp",
    "fdp_from_dims",
    "mse",
    "read_dataset_csv",
    "write_dataset_csv",
]

DEFAULT_RANK_TOL = 1e-10


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Dataset:
    """Response ``Y`` (length n) and design ``X`` (n x p), columns in ranked order."""

    Y: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        Y = _frozen(self.Y)
        X = _frozen(self.X)
        if Y.ndim != 1:
            raise DomainError("Y must be a vector")
        if X.ndim != 2:
            raise DomainError("X must be a matrix")
        if X.shape[0] != Y.shape[0]:
            raise DomainError(f"Y has {Y.shape[0]} entries but X has {X.shape[0]} rows")
        if X.shape[0] == 0 or X.shape[1] == 0:
            raise DomainError("dataset must have n >= 1 and p >= 1")
        if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(X))):
            raise DomainError("dataset entries must be finite")
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "X", X)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return min(self.n, self.p)


@dataclass(frozen=True)
class OrthoModel:
    """Orthonormal basis of the nested collection plus the projections of ``Y``.

    Attributes
    ----------
    U : (n, q) array
        Orthonormal columns with ``span(u_1..u_j) = span(X_1..X_j)``.
    R : (q, q) array
        Upper-triangular Gram-Schmidt factor, ``X[:, :q] = U @ R``.
    y_coef : (q,) array
        ``y_coef[k-1] = <Y, u_k>``.
    y_sq_norm : float
        ``||Y||^2``.
    resid_sq : float
        ``||Y - proj_{m_q} Y||^2``, computed directly rather than by
        subtraction so tiny residuals keep their precision.
    """

    U: np.ndarray
    R: np.ndarray
    y_coef: np.ndarray
    y_sq_norm: float
    resid_sq: float
    p: int

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def q(self) -> int:
        return self.U.shape[1]

    def with_response(self, Y) -> "OrthoModel":
        """Same design, new response. Avoids re-orthonormalizing in simulations."""
        return _project(self.U, self.R, np.asarray(Y, dtype=float), self.p)


@dataclass(frozen=True)
class SelectionResult:
    """Model selected by the penalized criterion (or by another selector).

    ``K`` is ``None`` when the selection did not come from the penalized
    criterion (cross-validation).
    """

    K: float | None
    dim: int
    rss: float
    beta_hat: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class GroundTruth:
    """True coefficients, noise variance and true dimension D*."""

    beta_star: np.ndarray
    sigma2: float
    d_star: int = -1

    def __post_init__(self):
        beta = _frozen(self.beta_star)
        if beta.ndim != 1:
            raise DomainError("beta_star must be a vector")
        if not self.sigma2 > 0:
            raise DomainError("sigma2 must be positive")
        nz = np.flatnonzero(beta)
        support = 0 if nz.size == 0 else int(nz[-1]) + 1
        if np.count_nonzero(beta[:support]) != support:
            raise DomainError("beta_star must be nonzero exactly on its leading coordinates")
        d_star = support if self.d_star < 0 else int(self.d_star)
        if d_star != support:
            raise DomainError(f"d_star={d_star} disagrees with the support of beta_star ({support})")
        object.__setattr__(self, "beta_star", beta)
        object.__setattr__(self, "d_star", d_star)


def _project(U: np.ndarray, R: np.ndarray, Y: np.ndarray, p: int) -> OrthoModel:
    if Y.shape != (U.shape[0],):
        raise DomainError(f"response must have length {U.shape[0]}")
    y_coef = U.T @ Y
    resid = Y - U @ y_coef
    return OrthoModel(
        U=U,
        R=R,
        y_coef=_frozen(y_coef),
        y_sq_norm=float(Y @ Y),
        resid_sq=float(resid @ resid),
        p=p,
    )


def orthonormalize(data: Dataset, tol: float = DEFAULT_RANK_TOL) -> OrthoModel:
    """Modified Gram-Schmidt, with one reorthogonalization pass, on ``X[:, :q]``.

    Raises
    ------
    RankDeficiencyError
        If some column keeps a residual norm below ``tol * ||X_j||`` after
        removing its components along the previous columns.
    """
    if not tol > 0:
        raise DomainError("tol must be positive")
    n, q = data.n, data.q
    U = np.zeros((n, q))
    R = np.zeros((q, q))
    for j in range(q):
        v = np.array(data.X[:, j], dtype=float)
        col_norm = np.linalg.norm(v)
        for _ in range(2):
            for i in range(j):
                c = U[:, i] @ v
                R[i, j] += c
                v -= c * U[:, i]
        resid_norm = np.linalg.norm(v)
        if col_norm == 0.0 or resid_norm < tol * col_norm:
            raise RankDeficiencyError(j + 1)
        R[j, j] = resid_norm
        U[:, j] = v / resid_norm
    return _project(_frozen(U), _frozen(R), np.asarray(data.Y), data.p)


def fit(data: Dataset, tol: float = DEFAULT_RANK_TOL) -> OrthoModel:
    """Alias of :func:`orthonormalize`, reads better at call sites."""
    return orthonormalize(data, tol)


def rss_profile(model: OrthoModel) -> np.ndarray:
    """Residual sums of squares ``||Y - X beta_hat_{m_j}||^2`` for ``j = 0..q``.

    Built as the residual outside ``m_q`` plus suffix sums of the squared
    coefficients, which keeps every entry exact to rounding even when the
    signal dwarfs the noise.
    """
    sq = np.asarray(model.y_coef) ** 2
    tail = np.concatenate([np.cumsum(sq[::-1])[::-1], [0.0]])
    return model.resid_sq + tail


def criterion(model: OrthoModel, K: float, sigma2: float) -> np.ndarray:
    """``crit_K(m_j) = RSS_j + K sigma2 j`` for every ``j``."""
    dims = np.arange(model.q + 1)
    return rss_profile(model) + K * sigma2 * dims


def _check_penalty(K, sigma2):
    if not np.all(np.asarray(K) > 0):
        raise DomainError("K must be positive")
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")


def select_dims(model: OrthoModel, k_grid, sigma2: float) -> np.ndarray:
    """Selected dimension for every K in ``k_grid`` (vectorized argmin).

    Ties resolve to the smallest dimension (``np.argmin`` keeps the first).
    """
    k = np.atleast_1d(np.asarray(k_grid, dtype=float))
    _check_penalty(k, sigma2)
    rss = rss_profile(model)
    dims = np.arange(model.q + 1)
    crit = rss[:, None] + sigma2 * dims[:, None] * k[None, :]
    return np.argmin(crit, axis=0)


def coefficients(model: OrthoModel, dim: int) -> np.ndarray:
    """Least-squares coefficients on ``m_dim`` as a length-p vector.

    Back-substitution through the Gram-Schmidt factor: on ``m_dim`` the fit
    is ``U[:, :dim] @ y_coef[:dim]`` and ``X[:, :dim] = U[:, :dim] R[:dim, :dim]``.
    """
    if not 0 <= dim <= model.q:
        raise DomainError(f"dimension must lie in [0, {model.q}]")
    beta = np.zeros(model.p)
    if dim > 0:
        beta[:dim] = solve_triangular(model.R[:dim, :dim], model.y_coef[:dim], lower=False)
    return beta


def select_model(model: OrthoModel, K: float, sigma2: float) -> SelectionResult:
    """Minimize ``crit_K`` over the nested collection."""
    _check_penalty(K, sigma2)
    dim = int(np.argmin(criterion(model, K, sigma2)))
    return SelectionResult(
        K=float(K),
        dim=dim,
        rss=float(rss_profile(model)[dim]),
        beta_hat=coefficients(model, dim),
    )


def fdp_from_dims(dims, d_star: int) -> np.ndarray:
    """False discovery proportion of nested models of the given dimensions."""
    dims = np.asarray(dims)
    return np.maximum(dims - d_star, 0) / np.maximum(dims, 1)


def fdp(sel: SelectionResult, truth: GroundTruth) -> float:
    """``FP / max(D_m, 1)``; in a nested collection ``FP(m_j) = max(j - D*, 0)``."""
    if truth.d_star > sel.beta_hat.shape[0]:
        raise DomainError("d_star exceeds the number of variables")
    return float(fdp_from_dims(sel.dim, truth.d_star))


def mse(sel: SelectionResult, new_y, X) -> float:
    """Mean squared prediction error of ``X @ beta_hat`` against ``new_y``."""
    new_y = np.asarray(new_y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != sel.beta_hat.shape[0]:
        raise DomainError("X columns do not match the coefficient vector")
    if new_y.shape != (X.shape[0],):
        raise DomainError("new_y length must equal the number of rows of X")
    r = new_y - X @ sel.beta_hat
    return float(r @ r) / X.shape[0]


def read_dataset_csv(path) -> Dataset:
    """Load a dataset: header row, first column ``Y``, then ``X_1..X_p`` in rank order."""
    path = Path(path)
    try:
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise DomainError(f"{path}: {exc}") from exc
    if raw.shape[1] < 2:
        raise DomainError(f"{path}: need a response column and at least one predictor")
    return Dataset(Y=raw[:, 0], X=raw[:, 1:])


def write_dataset_csv(data: Dataset, path) -> None:
    header = ",".join(["Y"] + [f"X{j + 1}" for j in range(data.p)])
    np.savetxt(path, np.column_stack([data.Y, data.X]), delimiter=",", header=header,
               comments="", fmt="%.17g")
