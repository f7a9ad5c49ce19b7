"""Weighted lasso with data-driven penalty level and iterated penalty loadings.

The penalty level is ``lambda = c_lambda * sqrt(n) * ndtri(1 - gamma / (2*p*d))``
where d is the number of regressions sharing the level (a union bound across
all coefficients of all regressions). Loadings start from the crude bound
``max|X| * rms(y)`` (identical across coordinates) and are refined from
residual-regressor products; the refined loadings drive the reported fits.

The solver is cyclic coordinate descent on the Gram matrix, so many
regressions on column subsets of one dataset can share a single X'X/n.
A converged fit satisfies the subgradient stationarity conditions within
`tol`, which `kkt_violation` re-checks independently from raw data.
"""

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .linalg import RankDeficient, std_normal_quantile

#: substituted for penalty loadings that collapse on a perfect fit
LOADING_FLOOR = 1e-12


class InvalidGamma(ValueError):
    """gamma / (2 p d) >= 1/2 would give a non-positive penalty."""


class DegenerateLoading(ValueError):
    """A refined penalty loading collapsed below the floor (perfect fit)."""


class MaxIterExceeded(UserWarning):
    """Coordinate descent hit the sweep cap; the fit is returned unconverged."""


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty-level and loading-iteration settings.

    gamma=None resolves to 0.1 / log(n) at fit time; d_total is the number
    of regressions covered by one penalty level (the candidate edge count
    when driven by an edge test).
    """

    c_lambda: float = 1.1
    gamma: float | None = None
    m_iterations: int = 2
    d_total: int = 1

    def resolve_gamma(self, n):
        return 0.1 / math.log(n) if self.gamma is None else self.gamma


@dataclass
class LassoFit:
    """Solution of one penalized regression."""

    coefficients: np.ndarray
    support: np.ndarray
    lam: float
    loadings: np.ndarray
    iterations_used: int
    converged: bool
    objective_trace: np.ndarray | None = None


@njit(cache=True)
def _cd_sweep_solver(gram, xty, y_sq_mean, pen, beta, tol, max_iter, track_obj):
    """Cyclic coordinate descent for 0.5*E_n[(y-Xb)^2] + sum_j pen_j |b_j|.

    Operates entirely on gram = X'X/n and xty = X'y/n. Stops once the max
    coefficient change in a sweep is <= tol *and* the stationarity
    conditions hold within tol. Returns the per-sweep objective trace when
    track_obj is set.
    """
    p = gram.shape[0]
    obj = np.empty(max_iter if track_obj else 0)
    sweeps = 0
    converged = False
    for it in range(max_iter):
        delta = 0.0
        for j in range(p):
            gjj = gram[j, j]
            old = beta[j]
            if gjj <= 0.0:
                if old != 0.0:
                    beta[j] = 0.0
                    if abs(old) > delta:
                        delta = abs(old)
                continue
            rho = xty[j] + gjj * old
            for l in range(p):
                rho -= gram[j, l] * beta[l]
            t = pen[j]
            if rho > t:
                new = (rho - t) / gjj
            elif rho < -t:
                new = (rho + t) / gjj
            else:
                new = 0.0
            if new != old:
                beta[j] = new
                d = abs(new - old)
                if d > delta:
                    delta = d
        sweeps = it + 1
        if track_obj:
            lin = 0.0
            quad = 0.0
            l1 = 0.0
            for j in range(p):
                if beta[j] != 0.0:
                    lin += xty[j] * beta[j]
                    l1 += pen[j] * abs(beta[j])
                    s = 0.0
                    for l in range(p):
                        s += gram[j, l] * beta[l]
                    quad += beta[j] * s
            obj[it] = 0.5 * (y_sq_mean - 2.0 * lin + quad) + l1
        if delta <= tol:
            # certify stationarity before declaring convergence
            viol = 0.0
            for j in range(p):
                g = xty[j]
                for l in range(p):
                    g -= gram[j, l] * beta[l]
                if beta[j] > 0.0:
                    v = abs(g - pen[j])
                elif beta[j] < 0.0:
                    v = abs(g + pen[j])
                else:
                    v = abs(g) - pen[j]
                if v > viol:
                    viol = v
            if viol <= tol:
                converged = True
                break
    return beta, sweeps, converged, obj


def penalty_level(n, p, d=1, cfg=PenaltyConfig()):
    """Shared penalty level for d regressions with p regressors on n samples."""
    gamma = cfg.resolve_gamma(n)
    tail = gamma / (2.0 * p * d)
    if tail >= 0.5:
        raise InvalidGamma(
            f"gamma/(2*p*d) = {tail:.4g} >= 1/2 gives a non-positive penalty"
        )
    return cfg.c_lambda * math.sqrt(n) * std_normal_quantile(1.0 - tail)


def initial_loadings(y, X):
    """Crude first-pass loadings: max absolute design entry times rms(y).

    Identical across coordinates by construction; refined loadings replace
    them after the first fit.
    """
    level = np.max(np.abs(X)) * math.sqrt(float(np.mean(np.square(y))))
    return np.full(X.shape[1], level)


def refine_loadings(y, X, coefficients, floor=None):
    """Residual-based loadings: loading_j = rms(residual * X_j).

    Raises DegenerateLoading when a component collapses below 1e-12 (perfect
    fit) unless `floor` is given, in which case components are clipped.
    """
    resid = y - X @ coefficients
    loads = np.sqrt(np.mean((resid[:, None] * X) ** 2, axis=0))
    if np.any(loads < LOADING_FLOOR):
        if floor is None:
            raise DegenerateLoading(
                "a penalty loading fell below 1e-12; pass floor= to clip"
            )
        loads = np.maximum(loads, floor)
    return loads


def weighted_lasso(
    y,
    X,
    lam,
    loadings,
    tol=1e-7,
    max_iter=10_000,
    *,
    gram=None,
    xty=None,
    y_sq_mean=None,
    beta0=None,
    track_objective=False,
):
    """Solve 0.5*E_n[(y - Xb)^2] + (lam/n) * ||diag(loadings) b||_1.

    Pass precomputed `gram` (X'X/n), `xty` (X'y/n) and `y_sq_mean` to reuse
    cross-products across many fits on the same data; `beta0` warm-starts
    the solver. An unconverged fit triggers a MaxIterExceeded warning but is
    still returned with converged=False.
    """
    n = X.shape[0]
    loadings = np.asarray(loadings, dtype=float)
    if lam < 0:
        raise ValueError(f"penalty level must be >= 0, got {lam}")
    if np.any(loadings <= 0):
        raise ValueError("penalty loadings must be strictly positive")
    gram = X.T @ X / n if gram is None else gram
    xty = X.T @ y / n if xty is None else xty
    y_sq_mean = float(y @ y) / n if y_sq_mean is None else y_sq_mean
    beta = np.zeros(X.shape[1]) if beta0 is None else np.array(beta0, dtype=float)
    pen = (lam / n) * loadings
    beta, sweeps, converged, obj = _cd_sweep_solver(
        np.ascontiguousarray(gram, dtype=float),
        np.ascontiguousarray(xty, dtype=float),
        y_sq_mean,
        pen,
        beta,
        tol,
        max_iter,
        track_objective,
    )
    if not converged:
        warnings.warn(
            f"coordinate descent did not converge in {max_iter} sweeps",
            MaxIterExceeded,
        )
    return LassoFit(
        coefficients=beta,
        support=np.flatnonzero(beta),
        lam=float(lam),
        loadings=loadings,
        iterations_used=sweeps,
        converged=converged,
        objective_trace=obj[:sweeps] if track_objective else None,
    )


def lasso_with_loadings(
    y,
    X,
    cfg=PenaltyConfig(),
    *,
    lam=None,
    tol=1e-7,
    max_iter=10_000,
    gram=None,
    xty=None,
):
    """Full loading-iteration pipeline.

    Fits with the crude initial loadings, then runs cfg.m_iterations rounds
    of (refine loadings from residuals, refit), warm-starting each refit.
    """
    n, p = X.shape
    if lam is None:
        lam = penalty_level(n, p, cfg.d_total, cfg)
    y_sq_mean = float(y @ y) / n
    loadings = initial_loadings(y, X)
    fit = weighted_lasso(
        y, X, lam, loadings, tol, max_iter, gram=gram, xty=xty, y_sq_mean=y_sq_mean
    )
    for _ in range(cfg.m_iterations):
        loadings = refine_loadings(y, X, fit.coefficients, floor=LOADING_FLOOR)
        fit = weighted_lasso(
            y,
            X,
            lam,
            loadings,
            tol,
            max_iter,
            gram=gram,
            xty=xty,
            y_sq_mean=y_sq_mean,
            beta0=fit.coefficients,
        )
    return fit


def post_lasso(y, X, support):
    """OLS refit restricted to `support`; zeros elsewhere.

    Collinear support columns are dropped deterministically (highest index
    within each dependent group, detected from the unpivoted QR diagonal)
    and reported through a warning.
    """
    support = np.asarray(support, dtype=int)
    coef = np.zeros(X.shape[1])
    if support.size == 0:
        return coef
    sub = X[:, support]
    keep = np.arange(support.size)
    r_diag = np.abs(np.diag(np.linalg.qr(sub, mode="r")))
    scale = np.max(r_diag) if r_diag.size else 0.0
    bad = r_diag <= 1e-10 * max(scale, 1.0)
    if np.any(bad):
        warnings.warn(
            f"dropping {bad.sum()} collinear column(s) from post-lasso refit: "
            f"{support[bad].tolist()}",
            UserWarning,
        )
        keep = np.flatnonzero(~bad)
        sub = sub[:, keep]
    solution, _, rank, _ = np.linalg.lstsq(sub, y, rcond=None)
    if rank < sub.shape[1]:
        raise RankDeficient("post-lasso design still rank deficient after drop")
    coef[support[keep]] = solution
    return coef


def sqrt_lasso(
    y,
    X,
    lam,
    loadings,
    tol=1e-7,
    max_iter=10_000,
    scale_iter=100,
    *,
    gram=None,
    xty=None,
    y_sq_mean=None,
):
    """Square-root lasso: sqrt(E_n[(y-Xb)^2]) + (lam/n) * ||diag(loadings) b||_1.

    Solved by scaled coordinate descent: alternate a weighted-lasso solve at
    effective penalty lam * rms(residual) with a residual-scale update until
    the scale stabilizes.
    """
    n = X.shape[0]
    gram = X.T @ X / n if gram is None else gram
    xty = X.T @ y / n if xty is None else xty
    y_sq_mean = float(y @ y) / n if y_sq_mean is None else y_sq_mean
    sigma = math.sqrt(max(y_sq_mean, 0.0))
    beta = np.zeros(X.shape[1])
    total_sweeps = 0
    converged = False
    fit = None
    for _ in range(scale_iter):
        fit = weighted_lasso(
            y,
            X,
            lam * sigma,
            loadings,
            tol,
            max_iter,
            gram=gram,
            xty=xty,
            y_sq_mean=y_sq_mean,
            beta0=beta,
        )
        beta = fit.coefficients
        total_sweeps += fit.iterations_used
        mse = y_sq_mean - 2.0 * float(xty @ beta) + float(beta @ (gram @ beta))
        new_sigma = math.sqrt(max(mse, 0.0))
        if abs(new_sigma - sigma) <= 1e-10 * max(1.0, sigma):
            converged = fit.converged
            sigma = new_sigma
            break
        sigma = new_sigma
        if sigma < LOADING_FLOOR:
            converged = fit.converged
            break
    return replace(fit, lam=float(lam), iterations_used=total_sweeps, converged=converged)


def kkt_violation(y, X, coefficients, lam, loadings, sqrt_scale=False):
    """Stationarity residual of a candidate solution, from raw data.

    Largest violation of: E_n[(y-Xb) X_j] == (lam/n)*loading_j*sign(b_j) on
    the support, |E_n[(y-Xb) X_j]| <= (lam/n)*loading_j off it. With
    sqrt_scale the gradient is divided by rms(residual) to certify a
    square-root-lasso solution.
    """
    n = X.shape[0]
    resid = y - X @ coefficients
    grad = X.T @ resid / n
    if sqrt_scale:
        sigma = math.sqrt(float(np.mean(resid**2)))
        if sigma <= LOADING_FLOOR:
            return 0.0
        grad = grad / sigma
    thr = (lam / n) * np.asarray(loadings, dtype=float)
    active = coefficients != 0
    worst = 0.0
    if np.any(active):
        worst = float(
            np.max(np.abs(grad[active] - thr[active] * np.sign(coefficients[active])))
        )
    if np.any(~active):
        worst = max(worst, float(np.max(np.abs(grad[~active]) - thr[~active])))
    return worst


class WeightedLasso(BaseEstimator, RegressorMixin):
    """Lasso with rigorous penalty level and iterated loadings.

    Parameters
    ----------
    c_lambda : float, default=1.1
        Slack factor of the penalty level; must exceed 1 for the
        regularization event to hold asymptotically.
    gamma : float, optional
        Tail probability of the penalty level. Defaults to 0.1 / log(n).
    m_iterations : int, default=2
        Number of loading-refinement rounds after the initial fit.
    d_total : int, default=1
        Number of parallel regressions sharing the penalty level.
    post : bool, default=False
        Refit OLS on the selected support.
    sqrt : bool, default=False
        Minimize the square-root-lasso criterion instead.
    tol : float, default=1e-7
        Convergence tolerance on the max coefficient change per sweep.
    max_iter : int, default=10000
        Sweep cap of the coordinate-descent solver.

    Attributes
    ----------
    coef_ : ndarray, shape (n_features,)
    support_ : ndarray of int
        Indices selected by the penalized fit.
    lambda_ : float
    loadings_ : ndarray, shape (n_features,)
    n_iter_ : int
    converged_ : bool
    """

    def __init__(
        self,
        c_lambda=1.1,
        gamma=None,
        m_iterations=2,
        d_total=1,
        post=False,
        sqrt=False,
        tol=1e-7,
        max_iter=10_000,
    ):
        self.c_lambda = c_lambda
        self.gamma = gamma
        self.m_iterations = m_iterations
        self.d_total = d_total
        self.post = post
        self.sqrt = sqrt
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_samples=2)
        cfg = PenaltyConfig(
            c_lambda=self.c_lambda,
            gamma=self.gamma,
            m_iterations=self.m_iterations,
            d_total=self.d_total,
        )
        n, p = X.shape
        if self.sqrt:
            lam = penalty_level(n, p, cfg.d_total, cfg)
            loads = np.sqrt(np.mean(X**2, axis=0))
            loads = np.maximum(loads, LOADING_FLOOR)
            fit = sqrt_lasso(y, X, lam, loads, self.tol, self.max_iter)
        else:
            fit = lasso_with_loadings(y, X, cfg, tol=self.tol, max_iter=self.max_iter)
        coef = fit.coefficients
        if self.post:
            coef = post_lasso(y, X, fit.support)
        self.coef_ = coef
        self.support_ = fit.support
        self.lambda_ = fit.lam
        self.loadings_ = fit.loadings
        self.n_iter_ = fit.iterations_used
        self.converged_ = fit.converged
        self.n_features_in_ = p
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X)
        return X @ self.coef_
