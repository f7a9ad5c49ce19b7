"""Per-edge orthogonal-score estimation and the simultaneous edge test.

For a candidate edge (j, k) the target is the coefficient of X_k in the
regression of X_j on all remaining variables. The score

    psi(X, theta, eta) = (X_j - theta*X_k - eta1 @ X_rest) * (X_k - eta2 @ X_rest)

is linear in theta, so given nuisance estimates (eta1 from regressing X_j on
X_{-j}, eta2 from regressing X_k on X_rest) the estimating equation
E_n[psi] = 0 has the exact root

    theta_hat = E_n[(X_j - eta1 @ X_rest) * v] / E_n[X_k * v],   v = X_k - eta2 @ X_rest.

Standardized per-observation scores feed a Gaussian multiplier bootstrap
(see `bands`) that yields critical values valid simultaneously over all
candidate edges. K-fold cross-fitting estimates nuisances out-of-fold,
solves the moment equation in-fold and averages.

Edges are 1-based (j, k) pairs with j > k.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import bands
from .lasso import (
    LOADING_FLOOR,
    PenaltyConfig,
    lasso_with_loadings,
    penalty_level,
    post_lasso,
    sqrt_lasso,
)
from .linalg import solve_ols

SOLVERS = ("lasso", "post_lasso", "sqrt_lasso", "ols")


class DegenerateJacobian(ValueError):
    """E_n[psi_a] vanished; X_k is (numerically) collinear with X_rest."""


class FoldTooSmall(UserWarning):
    """A cross-fitting fold is smaller than the variable count."""


class UnequalFolds(UserWarning):
    """n is not divisible by K; remainder observations spread over the first folds."""


@dataclass
class NuisancePair:
    """Nuisance estimates of one edge.

    eta1 are the coefficients of X_rest in the X_j equation (the X_k
    coefficient is split off as theta_init, kept for diagnostics only) and
    eta2 the coefficients of X_rest in the X_k equation.
    """

    eta1: np.ndarray
    eta2: np.ndarray
    theta_init: float = 0.0


@dataclass
class EdgeStat:
    """Point estimate, Jacobian, dispersion and standardized scores of one edge."""

    theta_hat: float
    jacobian_hat: float
    sigma_hat: float
    psi_std: np.ndarray


def normalize_edges(edges, p=None):
    """Validate and orient candidate edges as 1-based (j, k) with j > k."""
    out = []
    for edge in edges:
        j, k = int(edge[0]), int(edge[1])
        if j == k:
            raise ValueError(f"self-loop {j}:{k} is not a valid edge")
        if j < k:
            j, k = k, j
        if k < 1:
            raise ValueError(f"edge ({j}, {k}) uses node indices below 1")
        if p is not None and j > p:
            raise ValueError(f"edge ({j}, {k}) references node {j} > p={p}")
        out.append((j, k))
    if not out:
        raise ValueError("edge set is empty")
    return out


def _rest_indices(p, j, k):
    mask = np.ones(p, dtype=bool)
    mask[[j - 1, k - 1]] = False
    return np.flatnonzero(mask)


def score(x, edge, theta, eta):
    """Orthogonal score at one observation (or a batch of observations)."""
    x = np.asarray(x, dtype=float)
    j, k = edge
    rest = _rest_indices(x.shape[-1], j, k)
    u = x[..., j - 1] - theta * x[..., k - 1] - x[..., rest] @ eta.eta1
    v = x[..., k - 1] - x[..., rest] @ eta.eta2
    return u * v


def score_parts(x, edge, eta):
    """Linear decomposition psi = psi_a * theta + psi_b.

    psi_a = -X_k * (X_k - eta2 @ X_rest) and
    psi_b = (X_j - eta1 @ X_rest) * (X_k - eta2 @ X_rest).
    """
    x = np.asarray(x, dtype=float)
    j, k = edge
    rest = _rest_indices(x.shape[-1], j, k)
    v = x[..., k - 1] - x[..., rest] @ eta.eta2
    psi_a = -x[..., k - 1] * v
    psi_b = (x[..., j - 1] - x[..., rest] @ eta.eta1) * v
    return psi_a, psi_b


class _NuisanceEngine:
    """Penalized regressions on column subsets of one dataset.

    Precomputes the full Gram matrix once so every regression works on
    cross-product slices, and caches the first-stage fit per response
    variable (it is shared by all edges with the same j).
    """

    def __init__(self, X, cfg, solver, tol=1e-7, max_iter=10_000):
        if solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {solver!r}")
        self.X = X
        self.n, self.p = X.shape
        self.cfg = cfg
        self.solver = solver
        self.tol = tol
        self.max_iter = max_iter
        self.gram = X.T @ X / self.n
        self._first_stage = {}

    def _fit(self, target, idx):
        y = self.X[:, target]
        X_sub = self.X[:, idx]
        if self.solver == "ols":
            return solve_ols(y, X_sub)
        gram_sub = self.gram[np.ix_(idx, idx)]
        xty = self.gram[idx, target]
        lam = penalty_level(self.n, idx.size, self.cfg.d_total, self.cfg)
        if self.solver == "sqrt_lasso":
            loads = np.maximum(np.sqrt(np.diag(gram_sub)), LOADING_FLOOR)
            fit = sqrt_lasso(
                y, X_sub, lam, loads, self.tol, self.max_iter,
                gram=gram_sub, xty=xty,
            )
            return fit.coefficients
        fit = lasso_with_loadings(
            y, X_sub, self.cfg, lam=lam, tol=self.tol, max_iter=self.max_iter,
            gram=gram_sub, xty=xty,
        )
        if self.solver == "post_lasso":
            return post_lasso(y, X_sub, fit.support)
        return fit.coefficients

    def first_stage(self, j):
        """Coefficients of the regression of X_j on X_{-j} (cached)."""
        j0 = j - 1
        if j0 not in self._first_stage:
            idx = np.delete(np.arange(self.p), j0)
            self._first_stage[j0] = self._fit(j0, idx)
        return self._first_stage[j0]

    def pair(self, edge):
        j, k = edge
        coef1 = self.first_stage(j)
        # position of X_k among the columns of X_{-j}
        pos_k = k - 1 if k < j else k - 2
        theta_init = float(coef1[pos_k])
        eta1 = np.delete(coef1, pos_k)
        idx2 = _rest_indices(self.p, j, k)
        eta2 = self._fit(k - 1, idx2)
        return NuisancePair(eta1=eta1, eta2=eta2, theta_init=theta_init)


def fit_nuisance(X, edge, cfg=PenaltyConfig(), solver="lasso"):
    """Nuisance pair of a single edge (see `_NuisanceEngine.pair`)."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] < 3:
        raise ValueError("edge inference needs at least 3 variables")
    engine = _NuisanceEngine(X, cfg, solver)
    return engine.pair(normalize_edges([edge], X.shape[1])[0])


def solve_theta(X, edge, eta):
    """Exact root of the empirical moment equation plus variance pieces.

    Returns an EdgeStat with theta_hat, the Jacobian estimate
    J = E_n[psi_a], sigma_hat and the standardized scores
    -psi / (sigma_hat * J), whose empirical second moment is one.
    """
    X = np.asarray(X, dtype=float)
    psi_a, psi_b = score_parts(X, edge, eta)
    mean_a = float(np.mean(psi_a))
    if abs(mean_a) < 1e-12:
        raise DegenerateJacobian(
            f"edge {edge}: E_n[psi_a] = {mean_a:.3e}; X_{edge[1]} is collinear "
            "with the remaining variables"
        )
    theta_hat = -float(np.mean(psi_b)) / mean_a
    psi = psi_a * theta_hat + psi_b
    sigma_hat = float(np.sqrt(np.mean(psi**2))) / abs(mean_a)
    if sigma_hat <= 0:
        raise DegenerateJacobian(f"edge {edge}: zero score variance")
    psi_std = -psi / (sigma_hat * mean_a)
    return EdgeStat(
        theta_hat=theta_hat,
        jacobian_hat=mean_a,
        sigma_hat=sigma_hat,
        psi_std=psi_std,
    )


def _fold_partition(n, n_folds, rng):
    """Random partition of range(n) into n_folds chunks (first folds absorb any remainder)."""
    if n_folds == 1:
        return [np.arange(n)]
    if n_folds > n // 2:
        raise ValueError(f"K={n_folds} folds need at least {2 * n_folds} observations")
    if n % n_folds != 0:
        warnings.warn(
            f"n={n} is not divisible by K={n_folds}; the first {n % n_folds} "
            "fold(s) hold one extra observation",
            UnequalFolds,
        )
    return np.array_split(rng.permutation(n), n_folds)


class EdgeTest(BaseEstimator):
    """Simultaneous significance test for a set of candidate edges.

    Fits lasso-type nuisance regressions per edge, solves the orthogonal
    moment equation exactly, and calibrates sup-type statistics with a
    Gaussian multiplier bootstrap so the test is valid jointly over all
    edges. With n_folds >= 2 the nuisances are estimated out-of-fold and
    the per-fold estimates averaged (cross-fitting).

    Parameters
    ----------
    edges : list of (j, k)
        Candidate edges, 1-based node pairs. Pairs are oriented to j > k.
    alpha : float, default=0.05
        Significance level of the configured region.
    solver : {'lasso', 'post_lasso', 'sqrt_lasso', 'ols'}, default='lasso'
        Nuisance estimator. 'ols' requires n > p and is intended for
        low-dimensional checks.
    region : {'rectangle', 'two_sided_sup', 's_sparse'}, default='rectangle'
        Confidence-region family driving `reject_`.
    S : int, default=1
        Window length of the s_sparse region.
    exp : {1, 2}, default=1
        Exponent of the s_sparse region.
    n_boot : int, default=500
        Number of multiplier-bootstrap draws.
    n_folds : int, default=1
        K for cross-fitting; 1 disables sample splitting.
    c_lambda, gamma, m_iterations : penalty settings, see `PenaltyConfig`.
    tol, max_iter : coordinate-descent controls.
    random_state : int, SeedSequence or None
        Seeds the fold split and the bootstrap multipliers.

    Attributes
    ----------
    edges_ : list of (j, k)
    theta_ : ndarray, shape (d,)
        Estimated partial-regression coefficients.
    jacobian_ : ndarray, shape (d,)
    sigma_ : ndarray, shape (d,)
    tstats_ : ndarray, shape (d,)
        sqrt(n) * theta_ / sigma_.
    scores_ : ndarray, shape (n, d)
        Standardized per-observation scores.
    boot_draws_ : ndarray, shape (n_boot, d)
        Retained multiplier-bootstrap draws; all regions are deterministic
        functions of this matrix (see `decide`).
    critical_value_ : float
        Rectangle critical value at `alpha`.
    intervals_ : ndarray, shape (d, 2)
        Simultaneous confidence intervals theta +- c * sigma / sqrt(n).
    decision_ : bands.RegionDecision
        Decision of the configured region.
    reject_ : bool
    """

    def __init__(
        self,
        edges=None,
        alpha=0.05,
        solver="lasso",
        region="rectangle",
        S=1,
        exp=1,
        n_boot=500,
        n_folds=1,
        c_lambda=1.1,
        gamma=None,
        m_iterations=2,
        tol=1e-7,
        max_iter=10_000,
        random_state=None,
    ):
        self.edges = edges
        self.alpha = alpha
        self.solver = solver
        self.region = region
        self.S = S
        self.exp = exp
        self.n_boot = n_boot
        self.n_folds = n_folds
        self.c_lambda = c_lambda
        self.gamma = gamma
        self.m_iterations = m_iterations
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def _seed_sequence(self):
        # rebuild so repeated fits spawn identical child streams
        if isinstance(self.random_state, np.random.SeedSequence):
            return np.random.SeedSequence(
                self.random_state.entropy, spawn_key=self.random_state.spawn_key
            )
        return np.random.SeedSequence(self.random_state)

    def fit(self, X, y=None):
        """Run the test on an (n, p) data matrix."""
        X = check_array(X, ensure_min_samples=2, ensure_min_features=3)
        n, p = X.shape
        if self.edges is None:
            raise ValueError("EdgeTest requires an explicit edge set")
        edges = normalize_edges(self.edges, p)
        if self.n_folds < 1:
            raise ValueError(f"n_folds must be >= 1, got {self.n_folds}")
        if self.n_boot < 1:
            raise ValueError(f"n_boot must be >= 1, got {self.n_boot}")
        cfg = PenaltyConfig(
            c_lambda=self.c_lambda,
            gamma=self.gamma,
            m_iterations=self.m_iterations,
            d_total=len(edges),
        )
        seed_split, seed_boot = self._seed_sequence().spawn(2)
        folds = _fold_partition(n, self.n_folds, np.random.Generator(np.random.Philox(seed_split)))
        if self.n_folds > 1 and min(fold.size for fold in folds) < p:
            warnings.warn(
                f"smallest fold has {min(f.size for f in folds)} observations "
                f"for p={p} variables; post-lasso refits may be unstable",
                FoldTooSmall,
            )
        engines = []
        for fold in folds:
            if self.n_folds == 1:
                X_train = X
            else:
                comp = np.setdiff1d(np.arange(n), fold, assume_unique=True)
                X_train = X[comp]
            engines.append(
                _NuisanceEngine(X_train, cfg, self.solver, self.tol, self.max_iter)
            )

        d = len(edges)
        theta = np.empty(d)
        jacobian = np.empty(d)
        sigma = np.empty(d)
        scores = np.empty((n, d))
        nuisances = []
        for r, edge in enumerate(edges):
            try:
                if self.n_folds == 1:
                    pair = engines[0].pair(edge)
                    stat = solve_theta(X, edge, pair)
                    pairs = [pair]
                else:
                    stat, pairs = self._cross_fit_edge(X, edge, engines, folds)
            except Exception as err:
                msg = f"edge {edge[0]}:{edge[1]}: {err}"
                try:
                    wrapped = type(err)(msg)
                except Exception:
                    wrapped = RuntimeError(msg)
                raise wrapped from err
            theta[r] = stat.theta_hat
            jacobian[r] = stat.jacobian_hat
            sigma[r] = stat.sigma_hat
            scores[:, r] = stat.psi_std
            nuisances.append(pairs)

        rng_boot = np.random.Generator(np.random.Philox(seed_boot))
        draws = bands.bootstrap_draws(scores, self.n_boot, rng_boot)

        self.n_, self.p_ = n, p
        self.edges_ = edges
        self.theta_ = theta
        self.jacobian_ = jacobian
        self.sigma_ = sigma
        self.tstats_ = np.sqrt(n) * theta / sigma
        self.scores_ = scores
        self.boot_draws_ = draws
        self.nuisances_ = nuisances
        self.fold_sizes_ = [int(f.size) for f in folds]
        rect = self.decide(region="rectangle", alpha=self.alpha)
        self.critical_value_ = rect.criticals["c"]
        self.intervals_ = rect.intervals
        self.decision_ = self.decide()
        self.reject_ = self.decision_.reject
        return self

    def _cross_fit_edge(self, X, edge, engines, folds):
        """Algorithm-style K-fold estimate of one edge.

        Per fold: nuisances from the complement, moment equation solved on
        the fold. The fold estimates are averaged; Jacobian and dispersion
        are evaluated over all observations with their fold's nuisance, at
        the aggregated theta.
        """
        n = X.shape[0]
        psi_a = np.empty(n)
        psi_b = np.empty(n)
        theta_folds = []
        pairs = []
        for engine, fold in zip(engines, folds):
            pair = engine.pair(edge)
            pairs.append(pair)
            a_k, b_k = score_parts(X[fold], edge, pair)
            psi_a[fold] = a_k
            psi_b[fold] = b_k
            mean_a = float(np.mean(a_k))
            if abs(mean_a) < 1e-12:
                raise DegenerateJacobian(
                    f"fold moment equation degenerate (E[psi_a]={mean_a:.3e})"
                )
            theta_folds.append(-float(np.mean(b_k)) / mean_a)
        theta_hat = float(np.mean(theta_folds))
        jac = float(np.mean(psi_a))
        if abs(jac) < 1e-12:
            raise DegenerateJacobian(f"aggregated Jacobian degenerate ({jac:.3e})")
        psi = psi_a * theta_hat + psi_b
        sigma_hat = float(np.sqrt(np.mean(psi**2))) / abs(jac)
        psi_std = -psi / (sigma_hat * jac)
        stat = EdgeStat(
            theta_hat=theta_hat,
            jacobian_hat=jac,
            sigma_hat=sigma_hat,
            psi_std=psi_std,
        )
        return stat, pairs

    def _spec(self, region=None, alpha=None, S=None, exp=None):
        return bands.RegionSpec(
            kind=self.region if region is None else region,
            alpha=self.alpha if alpha is None else alpha,
            S=self.S if S is None else S,
            exp=self.exp if exp is None else exp,
        )

    def decide(self, region=None, alpha=None, S=None, exp=None):
        """Evaluate a region family on the retained bootstrap draws.

        Any of the constructor's region parameters can be overridden; no
        refit or new bootstrap pass is performed, so decisions for
        different regions are mutually consistent.
        """
        check_is_fitted(self, "boot_draws_")
        spec = self._spec(region, alpha, S, exp)
        criticals = bands.criticals_for(self.boot_draws_, spec)
        return bands.region_decide(
            self.tstats_, spec, criticals,
            theta=self.theta_, sigma=self.sigma_, n=self.n_,
        )

    def report(self):
        """JSON-serializable summary of the fitted test (schema 1)."""
        check_is_fitted(self, "boot_draws_")
        config = self.get_params()
        if isinstance(config.get("random_state"), np.random.SeedSequence):
            config["random_state"] = repr(config["random_state"])
        return {
            "schema": 1,
            "config": config,
            "n": self.n_,
            "p": self.p_,
            "d": len(self.edges_),
            "fold_sizes": self.fold_sizes_,
            "edges": [list(e) for e in self.edges_],
            "theta": self.theta_.tolist(),
            "sigma": self.sigma_.tolist(),
            "jacobian": self.jacobian_.tolist(),
            "tstats": self.tstats_.tolist(),
            "intervals": self.intervals_.tolist(),
            "rectangle_critical_value": float(self.critical_value_),
            "theta_init": [
                [pair.theta_init for pair in pairs] for pairs in self.nuisances_
            ],
            "region": self.decision_.to_dict(),
            "reject": bool(self.reject_),
        }


def test_edges(X, edges, alpha=0.05, solver="lasso", region="rectangle",
               S=1, exp=1, n_boot=500, random_state=None, **kwargs):
    """Fit an EdgeTest without cross-fitting and return it."""
    return EdgeTest(
        edges=edges, alpha=alpha, solver=solver, region=region, S=S, exp=exp,
        n_boot=n_boot, n_folds=1, random_state=random_state, **kwargs,
    ).fit(X)


def cross_fit_inference(X, edges, n_folds, alpha=0.05, solver="lasso",
                        region="rectangle", S=1, exp=1, n_boot=500,
                        random_state=None, **kwargs):
    """Fit a K-fold cross-fitted EdgeTest and return it."""
    return EdgeTest(
        edges=edges, alpha=alpha, solver=solver, region=region, S=S, exp=exp,
        n_boot=n_boot, n_folds=n_folds, random_state=random_state, **kwargs,
    ).fit(X)
