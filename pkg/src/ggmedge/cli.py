"""Command-line interface: generate synthetic data, test edges, run grids.

Exit codes of `test`: 0 the null is accepted, 3 it is rejected, 1 input
error (malformed CSV or edge list), 2 numerical failure during the fit.
"""

import csv
import dataclasses
import json
import os
import sys

import click
import numpy as np

from . import __version__
from .graphs import make_model, sample_mvn
from .inference import DegenerateJacobian, EdgeTest, normalize_edges
from .linalg import NotPositiveDefinite, RankDeficient
from .rng import stream
from .simulate import (
    SimConfig,
    acceptance_table,
    results_to_csv,
    results_to_json,
    table_grid,
)

_SOLVER_NAMES = {
    "lasso": "lasso",
    "post-lasso": "post_lasso",
    "sqrt-lasso": "sqrt_lasso",
    "ols": "ols",
}
_REGION_NAMES = {
    "rect": "rectangle",
    "two-sided": "two_sided_sup",
    "sparse": "s_sparse",
}


class InputError(Exception):
    """User-facing problem with an input file or flag value."""


def read_data_csv(path):
    """Load an observation matrix from a headered CSV file."""
    try:
        handle = open(path, newline="")
    except OSError as err:
        raise InputError(f"cannot open {path}: {err}") from err
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: file is empty") from None
        header = [name.strip() for name in header]
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(
                    f"{path}: line {line_no}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                rows.append([float(value) for value in row])
            except ValueError:
                bad = next(v for v in row if not _is_float(v))
                raise InputError(
                    f"{path}: line {line_no}: cannot parse {bad!r} as a number"
                ) from None
    if len(rows) < 2:
        raise InputError(f"{path}: need at least 2 data rows, found {len(rows)}")
    return header, np.asarray(rows)


def _is_float(token):
    try:
        float(token)
        return True
    except ValueError:
        return False


def _resolve_node(token, header):
    token = token.strip()
    if token in header:
        return header.index(token) + 1
    try:
        idx = int(token)
    except ValueError:
        raise InputError(f"unknown column {token!r} in edge list") from None
    if not 1 <= idx <= len(header):
        raise InputError(
            f"edge index {idx} out of range 1..{len(header)} in edge list"
        )
    return idx


def parse_edges(text, header):
    """Parse 'a:b,c:d' edge tokens; nodes are column names or 1-based indices."""
    edges = []
    for token in text.replace("\n", ",").split(","):
        token = token.strip()
        if not token:
            continue
        parts = token.split(":")
        if len(parts) != 2:
            raise InputError(f"edge token {token!r} is not of the form a:b")
        a, b = (_resolve_node(part, header) for part in parts)
        edges.append((a, b))
    if not edges:
        raise InputError("edge list is empty")
    try:
        return normalize_edges(edges, len(header))
    except ValueError as err:
        raise InputError(str(err)) from None


def _write_data_csv(path, data):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"x{i + 1}" for i in range(data.shape[1])])
        for row in data:
            writer.writerow([f"{value:.17g}" for value in row])


@click.group()
@click.version_option(version=__version__, prog_name="ggmedge")
def main():
    """Simultaneous edge tests for Gaussian graphical models."""


@main.command()
@click.option("--design", required=True,
              type=click.Choice(["random", "cluster", "approx", "independent"]))
@click.option("--p", "p", required=True, type=int, help="Number of variables.")
@click.option("--n", "n", default=200, show_default=True, type=int,
              help="Number of observations.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--prob", default=None, type=float,
              help="Edge probability (default 5/p).")
@click.option("--a", "a", default=0.05, show_default=True, type=float,
              help="Perturbation bound of the approx design.")
@click.option("--groups", default=4, show_default=True, type=int,
              help="Group count of the cluster design.")
@click.option("--out", default=".", show_default=True,
              type=click.Path(file_okay=False),
              help="Directory receiving data.csv and model.json.")
def generate(design, p, n, seed, prob, a, groups, out):
    """Sample a synthetic dataset and write it with its generating model."""
    rng = stream(seed, 0)
    try:
        model = make_model(design, p, rng, prob=prob, a=a, groups=groups)
        data = sample_mvn(model, n, rng)
    except ValueError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(1)
    os.makedirs(out, exist_ok=True)
    data_path = os.path.join(out, "data.csv")
    model_path = os.path.join(out, "model.json")
    _write_data_csv(data_path, data)
    payload = {
        "schema": 1,
        "design": design,
        "p": p,
        "n": n,
        "seed": seed,
        "params": {"prob": prob if prob is not None else 5.0 / p,
                   "a": a, "groups": groups, "v": 0.3, "u": 0.1},
        "adjacency": model.adjacency.tolist(),
        "phi": model.phi.tolist(),
        "sigma": model.sigma.tolist(),
        "true_edges": sorted(list(e) for e in model.true_edges),
    }
    with open(model_path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")
    click.echo(f"wrote {data_path} and {model_path}")


@main.command("test")
@click.option("--data", "data_path", required=True, type=click.Path(dir_okay=False))
@click.option("--edges", "edges_text", default=None,
              help="Comma-separated a:b pairs (column names or 1-based indices).")
@click.option("--edges-file", default=None, type=click.Path(dir_okay=False),
              help="File with one edge token per line.")
@click.option("--alpha", default=0.05, show_default=True, type=float)
@click.option("--solver", default="lasso", show_default=True,
              type=click.Choice(sorted(_SOLVER_NAMES)))
@click.option("--region", default="rect", show_default=True,
              type=click.Choice(sorted(_REGION_NAMES)))
@click.option("--S", "s_window", default=1, show_default=True, type=int)
@click.option("--exp", "exponent", default=1, show_default=True, type=int)
@click.option("--folds", default=1, show_default=True, type=int,
              help="K for cross-fitting; 1 disables it.")
@click.option("--B", "n_boot", default=500, show_default=True, type=int,
              help="Bootstrap draws.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", default=None, type=click.Path(dir_okay=False),
              help="Write the JSON report here instead of stdout.")
def cmd_test(data_path, edges_text, edges_file, alpha, solver, region,
             s_window, exponent, folds, n_boot, seed, out):
    """Test whether every listed edge is absent from the graphical model."""
    try:
        header, data = read_data_csv(data_path)
        if edges_text is None and edges_file is None:
            raise InputError("provide --edges or --edges-file")
        tokens = edges_text or ""
        if edges_file is not None:
            try:
                with open(edges_file) as handle:
                    tokens = ",".join(filter(None, [tokens, handle.read()]))
            except OSError as err:
                raise InputError(f"cannot open {edges_file}: {err}") from err
        edges = parse_edges(tokens, header)
    except InputError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(1)

    tester = EdgeTest(
        edges=edges,
        alpha=alpha,
        solver=_SOLVER_NAMES[solver],
        region=_REGION_NAMES[region],
        S=s_window,
        exp=exponent,
        n_boot=n_boot,
        n_folds=folds,
        random_state=seed,
    )
    try:
        tester.fit(data)
    except (DegenerateJacobian, NotPositiveDefinite, RankDeficient,
            np.linalg.LinAlgError, FloatingPointError) as err:
        click.echo(f"numerical failure: {err}", err=True)
        sys.exit(2)
    except ValueError as err:
        # parameter-level problems are input errors, not numerical ones
        click.echo(f"error: {err}", err=True)
        sys.exit(1)
    except Exception as err:
        click.echo(f"numerical failure: {err}", err=True)
        sys.exit(2)

    report = tester.report()
    report["columns"] = header
    text = json.dumps(report, indent=2)
    if out is None:
        click.echo(text)
    else:
        with open(out, "w") as handle:
            handle.write(text + "\n")
    sys.exit(3 if report["reject"] else 0)


@main.command()
@click.option("--table", default=None, type=click.IntRange(1, 6),
              help="Reproduce one of the six reference tables.")
@click.option("--design", default=None,
              type=click.Choice(["random", "cluster", "approx", "independent"]))
@click.option("--p", "p", default=None, type=int)
@click.option("--n", "n", default=200, show_default=True, type=int)
@click.option("--l", "reps", default=None, type=int,
              help="Replications (default 200, or 1000 with --full).")
@click.option("--B", "n_boot", default=None, type=int,
              help="Bootstrap draws (default 300, or 500 with --full).")
@click.option("--alpha", default=0.05, show_default=True, type=float)
@click.option("--solver", "solvers", multiple=True,
              type=click.Choice(sorted(_SOLVER_NAMES)),
              help="Repeatable; defaults to lasso and post-lasso.")
@click.option("--region", "regions", multiple=True,
              type=click.Choice(sorted(_REGION_NAMES)),
              help="Repeatable; defaults to rect and two-sided.")
@click.option("--S", "s_window", default=1, show_default=True, type=int)
@click.option("--exp", "exponent", default=1, show_default=True, type=int)
@click.option("--folds", default=1, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--full", is_flag=True, help="Full scale: l=1000, B=500.")
@click.option("--jobs", default=None, type=int,
              help="Worker processes (capped by GGM_THREADS).")
@click.option("--out", default=None, type=click.Path(dir_okay=False),
              help="Write per-cell rates as CSV.")
@click.option("--json-out", default=None, type=click.Path(dir_okay=False),
              help="Write the JSON summary.")
def simulate(table, design, p, n, reps, n_boot, alpha, solvers, regions,
             s_window, exponent, folds, seed, full, jobs, out, json_out):
    """Monte Carlo acceptance rates over a design grid."""
    reps = reps if reps is not None else (1000 if full else 200)
    n_boot = n_boot if n_boot is not None else (500 if full else 300)
    if table is not None:
        configs = [
            dataclasses.replace(cfg, replications=reps, n_boot=n_boot, alpha=alpha, n=n)
            for cfg in table_grid(table, full=full, base_seed=seed)
        ]
    elif design is not None and p is not None:
        solver_set = tuple(_SOLVER_NAMES[s] for s in solvers) or ("lasso", "post_lasso")
        region_set = tuple(
            (_REGION_NAMES[r], s_window, exponent) for r in regions
        ) or (("rectangle", 1, 1), ("two_sided_sup", 1, 1))
        configs = [
            SimConfig(
                design=design, p=p, n=n, replications=reps, alpha=alpha,
                n_boot=n_boot, solvers=solver_set, regions=region_set,
                folds=(folds,), base_seed=seed,
            )
        ]
    else:
        raise click.UsageError("empty grid: pass --table or both --design and --p")

    results = []
    for cfg in configs:
        res = acceptance_table(cfg, n_jobs=jobs)
        results.append(res)
        for row in res.rows():
            click.echo(
                f"{row['design']:>11} p={row['p']:<4} d={row['d']:<4} "
                f"{row['solver']:<10} {row['region']:<13} S={row['S']} exp={row['exp']} "
                f"K={row['K']}  rate={row['rate']:.3f} (se {row['se']:.3f}, l={row['l']})"
            )
    if out is not None:
        results_to_csv(results, out)
        click.echo(f"wrote {out}")
    if json_out is not None:
        with open(json_out, "w") as handle:
            handle.write(results_to_json(results) + "\n")
        click.echo(f"wrote {json_out}")


if __name__ == "__main__":
    main()
