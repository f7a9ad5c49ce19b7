"""Monte Carlo harness: acceptance rates of the edge test on synthetic designs.

Per replication, a fresh model and dataset are drawn, the null edge set of
the design is verified to be truly absent, and every (solver, folds) cell
is fitted once on the same data with all requested regions decided from the
shared bootstrap draws. Streams derive from (base_seed, replication, cell)
so results are independent of scheduling: parallel and serial runs agree
bit for bit, and adding cells never perturbs existing ones.

Desk-scale defaults (200 replications, 300 bootstrap draws) keep a full
grid in the minutes range; the reference study's scale is l=1000, B=500.
"""

import csv
import json
import os
import time
import warnings
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed

from .graphs import make_model, sample_mvn
from .inference import EdgeTest, FoldTooSmall, UnequalFolds
from .rng import stream

_SOLVER_CODES = {"lasso": 0, "post_lasso": 1, "sqrt_lasso": 2, "ols": 3}


class IncompatibleP(ValueError):
    """Variable count does not fit the design's edge-set recipe."""


class NullViolated(RuntimeError):
    """The generated model has a true edge inside the tested set."""


def null_edge_set(design, p):
    """Candidate edges that are absent by construction for each design.

    random/approx test the isolation of the last variable; cluster tests
    that the first two groups are unconnected; independent tests all pairs.
    Pairs are returned in the conventional order, oriented to j > k.
    """
    if design in ("random", "approx"):
        if p < 3:
            raise IncompatibleP(f"{design} design needs p >= 3, got {p}")
        return [(p, k) for k in range(1, p)]
    if design == "cluster":
        if p % 4 != 0:
            raise IncompatibleP(f"cluster design needs 4 | p, got p={p}")
        size = p // 4
        return [(j, i) for i in range(1, size + 1) for j in range(size + 1, 2 * size + 1)]
    if design == "independent":
        if p < 2:
            raise IncompatibleP(f"independent design needs p >= 2, got {p}")
        return [(j, k) for k in range(1, p) for j in range(k + 1, p + 1)]
    raise IncompatibleP(f"unknown design {design!r}")


@dataclass(frozen=True)
class SimConfig:
    """One simulation grid cell family: a design crossed with method cells."""

    design: str
    p: int
    n: int = 200
    replications: int = 200
    alpha: float = 0.05
    n_boot: int = 300
    solvers: tuple = ("lasso", "post_lasso")
    regions: tuple = (("rectangle", 1, 1), ("two_sided_sup", 1, 1))
    folds: tuple = (1,)
    base_seed: int = 0
    prob: float | None = None
    a: float = 0.05
    groups: int = 4
    c_lambda: float = 1.1
    gamma: float | None = None
    m_iterations: int = 2

    def cells(self):
        """(solver, K, kind, S, exp) tuples in deterministic order."""
        return [
            (solver, k, kind, S, exp)
            for solver in self.solvers
            for k in self.folds
            for (kind, S, exp) in self.regions
        ]


@dataclass
class SimResult:
    """Aggregated acceptance rates plus the raw per-replication flags."""

    config: SimConfig
    d: int
    rates: dict
    flags: dict
    wall_time: float

    def rows(self):
        cfg = self.config
        out = []
        for cell in cfg.cells():
            solver, k, kind, S, exp = cell
            rate = self.rates[cell]
            out.append(
                {
                    "design": cfg.design,
                    "p": cfg.p,
                    "d": self.d,
                    "solver": solver,
                    "region": kind,
                    "S": S,
                    "exp": exp,
                    "K": k,
                    "rate": rate,
                    "se": float(np.sqrt(rate * (1.0 - rate) / cfg.replications)),
                    "l": cfg.replications,
                }
            )
        return out


CSV_COLUMNS = ["design", "p", "d", "solver", "region", "S", "exp", "K", "rate", "se", "l"]


def results_to_csv(results, path_or_buffer):
    """Write SimResult rows as CSV with the canonical column order."""
    own = isinstance(path_or_buffer, (str, os.PathLike))
    handle = open(path_or_buffer, "w", newline="") if own else path_or_buffer
    try:
        writer = csv.DictWriter(handle, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for res in results:
            for row in res.rows():
                writer.writerow(row)
    finally:
        if own:
            handle.close()


def results_to_json(results):
    """JSON summary of a list of SimResults."""
    return json.dumps(
        {
            "schema": 1,
            "results": [row for res in results for row in res.rows()],
        },
        indent=2,
    )


def run_replication(cfg, rep_index):
    """Acceptance flags of every cell on one freshly drawn dataset."""
    rng = stream(cfg.base_seed, rep_index, 0)
    model = make_model(
        cfg.design, cfg.p, rng, prob=cfg.prob, a=cfg.a, groups=cfg.groups
    )
    data = sample_mvn(model, cfg.n, rng)
    edges = null_edge_set(cfg.design, cfg.p)
    offending = set(edges) & model.true_edges
    if offending:
        raise NullViolated(
            f"{cfg.design} design rep {rep_index}: tested edges {sorted(offending)} "
            "are present in the generated model"
        )
    flags = {}
    for solver in cfg.solvers:
        for k in cfg.folds:
            seed = np.random.SeedSequence(
                cfg.base_seed, spawn_key=(rep_index, 1 + _SOLVER_CODES[solver], k)
            )
            fitted = EdgeTest(
                edges=edges,
                alpha=cfg.alpha,
                solver=solver,
                region="rectangle",
                n_boot=cfg.n_boot,
                n_folds=k,
                c_lambda=cfg.c_lambda,
                gamma=cfg.gamma,
                m_iterations=cfg.m_iterations,
                random_state=seed,
            ).fit(data)
            for kind, S, exp in cfg.regions:
                decision = fitted.decide(region=kind, S=S, exp=exp, alpha=cfg.alpha)
                flags[(solver, k, kind, S, exp)] = not decision.reject
    return flags


def resolve_jobs(n_jobs=None):
    """Worker count: requested value capped by the GGM_THREADS env var."""
    cap = os.environ.get("GGM_THREADS")
    cap = int(cap) if cap else os.cpu_count() or 1
    if n_jobs is None or n_jobs < 0:
        n_jobs = cap
    return max(1, min(n_jobs, cap))


def _quiet_replication(cfg, rep_index):
    # fold-shape warnings are flagged once by acceptance_table, not per rep
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UnequalFolds)
        warnings.simplefilter("ignore", FoldTooSmall)
        return run_replication(cfg, rep_index)


def acceptance_table(cfg, n_jobs=None):
    """Run all replications of one SimConfig and aggregate acceptance rates."""
    if cfg.replications < 1:
        raise ValueError("need at least one replication")
    for k in cfg.folds:
        if k > 1 and cfg.n % k != 0:
            warnings.warn(
                f"n={cfg.n} is not divisible by K={k}; remainder observations "
                "are spread over the first folds in every replication",
                UnequalFolds,
            )
    jobs = resolve_jobs(n_jobs)
    start = time.perf_counter()
    if jobs == 1:
        per_rep = [_quiet_replication(cfg, rep) for rep in range(cfg.replications)]
    else:
        per_rep = Parallel(n_jobs=jobs)(
            delayed(_quiet_replication)(cfg, rep) for rep in range(cfg.replications)
        )
    wall = time.perf_counter() - start
    flags = {
        cell: np.array([rep[cell] for rep in per_rep], dtype=bool)
        for cell in cfg.cells()
    }
    rates = {cell: float(np.mean(values)) for cell, values in flags.items()}
    d = len(null_edge_set(cfg.design, cfg.p))
    return SimResult(config=cfg, d=d, rates=rates, flags=flags, wall_time=wall)


#: (design, p) rows of the reference study's tables
TABLE_ROWS = (
    ("random", 20), ("random", 50), ("random", 100),
    ("cluster", 20), ("cluster", 40), ("cluster", 60),
    ("approx", 20), ("approx", 50), ("approx", 100),
    ("independent", 5), ("independent", 10), ("independent", 20),
)

#: table number -> (S, exp, K)
TABLE_SETTINGS = {
    1: (1, 1, 1),
    2: (5, 1, 1),
    3: (5, 2, 1),
    4: (1, 1, 3),
    5: (5, 1, 3),
    6: (5, 2, 3),
}


def table_grid(table, full=False, base_seed=0, solvers=("lasso", "post_lasso", "sqrt_lasso")):
    """SimConfigs reproducing one of the six reference tables.

    Desk scale by default; full=True restores the study's l=1000, B=500.
    """
    if table not in TABLE_SETTINGS:
        raise ValueError(f"table must be in {sorted(TABLE_SETTINGS)}, got {table}")
    S, exp, k = TABLE_SETTINGS[table]
    # region I: one-sided on the (windowed) sup statistic; region II: two-sided
    region_one = ("rectangle", 1, 1) if (S, exp) == (1, 1) else ("s_sparse", S, exp)
    regions = (region_one, ("two_sided_sup", S, exp))
    configs = []
    for design, p in TABLE_ROWS:
        configs.append(
            SimConfig(
                design=design,
                p=p,
                replications=1000 if full else 200,
                n_boot=500 if full else 300,
                solvers=solvers,
                regions=regions,
                folds=(k,),
                base_seed=base_seed,
            )
        )
    return configs
