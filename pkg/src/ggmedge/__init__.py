"""Simultaneous significance tests for edges of Gaussian graphical models.

The main entry point is `EdgeTest`, a fit-style estimator that tests
whether a (possibly large) set of candidate edges is jointly absent from
the conditional-independence graph of multivariate normal data, using
lasso-based nuisance estimation, orthogonal per-edge moment equations and
a Gaussian multiplier bootstrap for simultaneous critical values.
"""

from .bands import RegionSpec, bootstrap_draws, bootstrap_sup, region_decide
from .graphs import (
    PrecisionModel,
    approx_graph,
    build_precision,
    cluster_graph,
    identity_graph,
    make_model,
    random_graph,
    sample_mvn,
)
from .inference import (
    EdgeTest,
    NuisancePair,
    cross_fit_inference,
    fit_nuisance,
    score,
    score_parts,
    solve_theta,
    test_edges,
)
from .lasso import (
    PenaltyConfig,
    WeightedLasso,
    lasso_with_loadings,
    penalty_level,
    post_lasso,
    sqrt_lasso,
    weighted_lasso,
)
from .rng import stream
from .simulate import SimConfig, acceptance_table, null_edge_set, table_grid

__version__ = "0.1.0"

__all__ = [
    "EdgeTest",
    "NuisancePair",
    "PenaltyConfig",
    "PrecisionModel",
    "RegionSpec",
    "SimConfig",
    "WeightedLasso",
    "acceptance_table",
    "approx_graph",
    "bootstrap_draws",
    "bootstrap_sup",
    "build_precision",
    "cluster_graph",
    "cross_fit_inference",
    "fit_nuisance",
    "identity_graph",
    "lasso_with_loadings",
    "make_model",
    "null_edge_set",
    "penalty_level",
    "post_lasso",
    "random_graph",
    "region_decide",
    "sample_mvn",
    "score",
    "score_parts",
    "solve_theta",
    "sqrt_lasso",
    "stream",
    "table_grid",
    "test_edges",
    "weighted_lasso",
    "__version__",
]
