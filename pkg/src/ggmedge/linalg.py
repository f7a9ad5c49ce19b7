"""Dense linear-algebra primitives shared by the generators and the estimators.

Thin, contract-checked wrappers around LAPACK routines (via numpy/scipy).
All functions are pure and safe to call from concurrent workers.
"""

import numpy as np
from scipy.special import ndtri


class NotPositiveDefinite(ValueError):
    """Cholesky pivot fell below the positivity floor (degenerate covariance)."""


class NonConvergence(RuntimeError):
    """Eigenvalue iteration failed to converge on a pathological input."""


class RankDeficient(ValueError):
    """Least-squares design has linearly dependent columns."""


class OutOfRange(ValueError):
    """Probability argument outside the open interval (0, 1)."""


#: smallest admissible Cholesky pivot; below this the matrix is treated as singular
PIVOT_FLOOR = 1e-12


def cholesky(m):
    """Lower-triangular Cholesky factor L with L @ L.T == m.

    Parameters
    ----------
    m : array-like, shape (p, p)
        Symmetric positive definite matrix.

    Raises
    ------
    NotPositiveDefinite
        If the factorization fails or any pivot is <= 1e-12.
    """
    m = np.asarray(m, dtype=float)
    try:
        lower = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as err:
        raise NotPositiveDefinite(f"matrix is not positive definite: {err}") from err
    # pivots of the factorization are the squared diagonal entries of L
    if np.min(np.diag(lower) ** 2) <= PIVOT_FLOOR:
        raise NotPositiveDefinite("Cholesky pivot below 1e-12; covariance is degenerate")
    return lower


def min_eigenvalue(m):
    """Smallest eigenvalue of a symmetric matrix."""
    m = np.asarray(m, dtype=float)
    try:
        return float(np.linalg.eigvalsh(m)[0])
    except np.linalg.LinAlgError as err:
        raise NonConvergence(f"eigenvalue iteration did not converge: {err}") from err


def solve_ols(y, X):
    """Least-squares coefficients of y on the columns of X.

    Raises
    ------
    RankDeficient
        If the columns of X are linearly dependent; the caller is expected
        to drop columns and refit.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise RankDeficient(f"design has rank {rank} < {X.shape[1]} columns")
    return coef


def std_normal_quantile(q):
    """Inverse standard normal CDF, accurate to well below 1e-9."""
    if not 0.0 < q < 1.0:
        raise OutOfRange(f"quantile level must lie in (0, 1), got {q}")
    return float(ndtri(q))
