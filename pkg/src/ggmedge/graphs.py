"""Synthetic precision-matrix designs and multivariate normal sampling.

Four designs are supported: `random` (sparse graph on the first p-1
variables, last variable independent), `cluster` (block-diagonal groups),
`approx` (random pattern plus small uniform perturbations, last variable
still independent) and `independent` (identity precision).

A design is materialized as a `PrecisionModel` holding the adjacency, the
precision matrix, the unit-diagonal covariance and the set of true edges.
Edges are 1-based (j, k) pairs with j > k throughout the public API.
"""

from dataclasses import dataclass, field

import numpy as np

from .linalg import cholesky, min_eigenvalue


class InvalidProb(ValueError):
    """Edge probability outside [0, 1]."""


class InvalidPartition(ValueError):
    """Group count does not evenly divide the number of variables."""


class SingularPrecision(ValueError):
    """Pre-precision matrix could not be inverted."""


@dataclass(frozen=True)
class PrecisionModel:
    """A synthetic Gaussian graphical model.

    Attributes
    ----------
    adjacency : ndarray, shape (p, p)
        Symmetric pattern matrix with zero diagonal.
    phi : ndarray, shape (p, p)
        Precision matrix (inverse of `sigma`).
    sigma : ndarray, shape (p, p)
        Covariance matrix, rescaled to unit diagonal.
    true_edges : frozenset of (j, k)
        1-based pairs with j > k where the precision entry is nonzero.
    """

    adjacency: np.ndarray
    phi: np.ndarray
    sigma: np.ndarray
    true_edges: frozenset = field(default_factory=frozenset)

    @property
    def p(self):
        return self.phi.shape[0]


def _check_prob(prob):
    if not 0.0 <= prob <= 1.0:
        raise InvalidProb(f"edge probability must lie in [0, 1], got {prob}")


def random_graph(p, prob, rng):
    """Random-graph adjacency on the first p-1 variables.

    Each unordered pair within the first p-1 variables is set to one
    independently with probability `prob`, in fixed lexicographic order
    (one uniform draw per pair) so seeds are portable. The last variable
    stays isolated.
    """
    _check_prob(prob)
    if p < 3:
        raise ValueError(f"random design needs p >= 3, got {p}")
    adj = np.zeros((p, p))
    for i in range(p - 1):
        for j in range(i + 1, p - 1):
            if rng.uniform() < prob:
                adj[i, j] = adj[j, i] = 1.0
    return adj


def cluster_graph(p, g, prob, rng):
    """Block adjacency: pairs inside each of the g equal groups drawn with `prob`."""
    _check_prob(prob)
    if p % g != 0:
        raise InvalidPartition(f"group count {g} does not divide p={p}")
    size = p // g
    adj = np.zeros((p, p))
    for block in range(g):
        lo = block * size
        for i in range(lo, lo + size):
            for j in range(i + 1, lo + size):
                if rng.uniform() < prob:
                    adj[i, j] = adj[j, i] = 1.0
    return adj


def approx_graph(p, prob, a, rng):
    """Random-graph pattern with off-pattern noise, last variable isolated.

    Pattern pairs (drawn exactly as in `random_graph`) get value one; every
    remaining off-diagonal pair inside the leading (p-1)-block is drawn
    uniformly from [-a, a]. The last row and column stay exactly zero so the
    last variable remains independent of the rest.
    """
    if a < 0:
        raise ValueError(f"perturbation bound must be >= 0, got {a}")
    adj = random_graph(p, prob, rng)
    for i in range(p - 1):
        for j in range(i + 1, p - 1):
            if adj[i, j] == 0.0:
                adj[i, j] = adj[j, i] = rng.uniform(-a, a)
    return adj


def build_precision(adj, v=0.3, u=0.1):
    """Turn an adjacency into a positive definite model with unit-variance margins.

    The pre-precision is ``v * adj + (|min_eig(v * adj)| + 0.1 + u) * I``;
    its inverse is rescaled to unit diagonal to give the covariance, and the
    precision is the matching diagonal rescaling of the pre-precision (which
    keeps structural zeros exactly zero).
    """
    adj = np.asarray(adj, dtype=float)
    p = adj.shape[0]
    shifted = v * adj
    shift = abs(min_eigenvalue(shifted)) + 0.1 + u
    phi_pre = shifted + shift * np.eye(p)
    try:
        sigma_pre = np.linalg.inv(phi_pre)
    except np.linalg.LinAlgError as err:
        raise SingularPrecision(f"pre-precision not invertible: {err}") from err
    scale = np.sqrt(np.diag(sigma_pre))
    sigma = sigma_pre / np.outer(scale, scale)
    np.fill_diagonal(sigma, 1.0)
    phi = phi_pre * np.outer(scale, scale)
    edges = frozenset(
        (j + 1, k + 1)
        for j in range(p)
        for k in range(j)
        if abs(phi[j, k]) > 1e-10
    )
    return PrecisionModel(adjacency=adj, phi=phi, sigma=sigma, true_edges=edges)


def identity_graph(p):
    """Model of p independent standard normal variables."""
    if p < 2:
        raise ValueError(f"need p >= 2, got {p}")
    eye = np.eye(p)
    return PrecisionModel(
        adjacency=np.zeros((p, p)), phi=eye, sigma=eye.copy(), true_edges=frozenset()
    )


def sample_mvn(model, n, rng):
    """n i.i.d. draws from N(0, model.sigma) via the Cholesky transform."""
    if n < 2:
        raise ValueError(f"need n >= 2 observations, got {n}")
    lower = cholesky(model.sigma)
    z = rng.standard_normal((n, model.p))
    return z @ lower.T


_DESIGNS = ("random", "cluster", "approx", "independent")


def make_model(design, p, rng, prob=None, a=0.05, groups=4, v=0.3, u=0.1):
    """Build the PrecisionModel for one of the named designs.

    `prob` defaults to 5/p as in the reference study; `a` is the uniform
    perturbation bound of the approx design; `groups` the cluster count.
    """
    if design not in _DESIGNS:
        raise ValueError(f"unknown design {design!r}, expected one of {_DESIGNS}")
    if design == "independent":
        return identity_graph(p)
    if prob is None:
        prob = 5.0 / p
    if design == "random":
        adj = random_graph(p, prob, rng)
    elif design == "cluster":
        adj = cluster_graph(p, groups, prob, rng)
    else:
        adj = approx_graph(p, prob, a, rng)
    return build_precision(adj, v=v, u=u)
