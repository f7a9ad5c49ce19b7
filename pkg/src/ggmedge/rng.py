"""Counter-based random streams with explicit splitting.

Every source of randomness in the package flows through `stream`, a Philox
generator keyed by (seed, *ids). Distinct id tuples give statistically
independent streams, so replications, folds and bootstrap draws can be
assigned disjoint streams and run in any order (or in parallel) without
changing results.
"""

import numpy as np


def stream(seed, *ids):
    """Independent Generator for the sub-stream (seed, *ids).

    Parameters
    ----------
    seed : int
        Base seed of the whole run.
    *ids : int
        Non-negative stream coordinates, e.g. (replication, cell).

    Returns
    -------
    numpy.random.Generator
        Philox-backed generator; same (seed, ids) always yields the
        identical sequence on any platform.
    """
    seq = np.random.SeedSequence(seed, spawn_key=tuple(int(i) for i in ids))
    return np.random.Generator(np.random.Philox(seq))
