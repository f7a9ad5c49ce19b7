"""Gaussian multiplier bootstrap and simultaneous confidence regions.

One bootstrap pass draws standard-normal multipliers, forms the process
``N_b = xi_b @ psi_std / sqrt(n)`` and keeps the full (B, d) matrix of
draws. All region families are deterministic reductions of that matrix:

* ``rectangle``   -- reject when sup_r |sqrt(n) theta_r / sigma_r| exceeds
  the (1-alpha)-quantile of sup_r |N_r|; gives per-edge intervals.
* ``two_sided_sup`` -- reject when the same sup statistic falls below the
  alpha/2 or above the (1-alpha/2) quantile (equal-tailed reading).
* ``s_sparse``    -- reject on sums of S consecutive (circularly indexed)
  standardized statistics raised to ``exp``, compared against the matching
  quantile of the identically transformed bootstrap draws.

Empirical quantiles use the ceil(q*B)-th order statistic.
"""

from dataclasses import dataclass

import numpy as np


class SpecMismatch(ValueError):
    """Critical values were built for a different region specification."""


@dataclass(frozen=True)
class RegionSpec:
    """Which confidence-region family to evaluate, and at what level.

    S and exp configure the windowed statistic of the s_sparse family and
    of the two-sided family; with S=1, exp=1 the window reduces to the
    plain sup statistic.
    """

    kind: str = "rectangle"
    alpha: float = 0.05
    S: int = 1
    exp: int = 1

    _KINDS = ("rectangle", "two_sided_sup", "s_sparse")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"kind must be one of {self._KINDS}, got {self.kind!r}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.S < 1:
            raise ValueError(f"S must be a positive integer, got {self.S}")
        if self.exp not in (1, 2):
            raise ValueError(f"exp must be 1 or 2, got {self.exp}")

    @property
    def windowed(self):
        return self.kind != "rectangle" and (self.S, self.exp) != (1, 1)


@dataclass(frozen=True)
class CriticalValues:
    """Bootstrap quantiles tied to the region spec they were built for."""

    spec: RegionSpec
    values: dict


@dataclass
class RegionDecision:
    """Outcome of one region evaluation."""

    spec: RegionSpec
    statistic: float
    criticals: dict
    reject: bool
    intervals: np.ndarray | None = None

    def to_dict(self):
        out = {
            "kind": self.spec.kind,
            "alpha": self.spec.alpha,
            "statistic": self.statistic,
            "critical_values": dict(self.criticals),
            "reject": bool(self.reject),
        }
        if self.spec.kind != "rectangle":
            out["S"] = self.spec.S
            out["exp"] = self.spec.exp
        if self.intervals is not None:
            out["intervals"] = self.intervals.tolist()
        return out


def empirical_quantile(values, q):
    """ceil(q*B)-th order statistic of the draws (conservative convention)."""
    values = np.sort(np.asarray(values, dtype=float))
    b = values.size
    idx = min(max(int(np.ceil(q * b)), 1), b) - 1
    return float(values[idx])


def bootstrap_draws(psi_std, n_draws, rng):
    """Multiplier-bootstrap matrix of shape (n_draws, d).

    psi_std must be the (n, d) matrix of standardized scores: each column
    has empirical second moment one (checked within 1e-6).
    """
    psi_std = np.asarray(psi_std, dtype=float)
    if psi_std.ndim != 2:
        raise ValueError("psi_std must be a (n, d) matrix")
    second = np.mean(psi_std**2, axis=0)
    nonzero = second > 0
    if np.any(np.abs(second[nonzero] - 1.0) > 1e-6):
        raise ValueError("columns of psi_std must have empirical second moment 1")
    n = psi_std.shape[0]
    xi = rng.standard_normal((n_draws, n))
    return xi @ psi_std / np.sqrt(n)


def sup_abs(draws):
    """Per-draw sup of absolute coordinates."""
    return np.max(np.abs(draws), axis=1)


def window_sums(values, S, exp):
    """Sums of S consecutive entries (circular, looking back) of values**exp.

    Entry r of the output is ``sum_{s=1..S} values[r-s]`` with wrap-around
    indexing, applied along the last axis.
    """
    powered = np.asarray(values, dtype=float) ** exp
    out = np.zeros_like(powered)
    for s in range(1, S + 1):
        out += np.roll(powered, s, axis=-1)
    return out


def bootstrap_sup(psi_std, alpha_levels, n_draws, rng):
    """Simultaneous critical values c_alpha for the sup-|N| statistic.

    Returns {alpha: (1-alpha)-quantile of sup_r |N_r|} for each requested
    level, from a single set of n_draws multiplier draws.
    """
    if n_draws < 100:
        raise ValueError(f"need at least 100 bootstrap draws, got {n_draws}")
    sup = sup_abs(bootstrap_draws(psi_std, n_draws, rng))
    return {alpha: empirical_quantile(sup, 1.0 - alpha) for alpha in alpha_levels}


def criticals_for(draws, spec):
    """Critical values of one region family from retained bootstrap draws."""
    d = draws.shape[1]
    if spec.windowed and spec.S > d:
        raise ValueError(f"window S={spec.S} exceeds edge count d={d}")
    if spec.windowed:
        sup = sup_abs(window_sums(draws, spec.S, spec.exp))
    else:
        sup = sup_abs(draws)
    if spec.kind == "two_sided_sup":
        values = {
            "lower": empirical_quantile(sup, spec.alpha / 2.0),
            "upper": empirical_quantile(sup, 1.0 - spec.alpha / 2.0),
        }
    else:
        values = {"c": empirical_quantile(sup, 1.0 - spec.alpha)}
    return CriticalValues(spec=spec, values=values)


def region_decide(tstats, spec, criticals, theta=None, sigma=None, n=None):
    """Accept/reject decision of one region family.

    tstats are the standardized statistics sqrt(n)*theta_hat/sigma_hat in
    edge order. For rectangle regions, pass theta, sigma and n to receive
    per-edge simultaneous intervals.
    """
    if criticals.spec != spec:
        raise SpecMismatch(
            f"critical values were built for {criticals.spec}, not {spec}"
        )
    tstats = np.asarray(tstats, dtype=float)
    values = criticals.values
    intervals = None
    if spec.windowed:
        statistic = float(np.max(np.abs(window_sums(tstats, spec.S, spec.exp))))
    else:
        statistic = float(np.max(np.abs(tstats)))
    if spec.kind == "two_sided_sup":
        reject = statistic < values["lower"] or statistic > values["upper"]
    else:
        reject = statistic > values["c"]
        if spec.kind == "rectangle" and theta is not None and sigma is not None and n is not None:
            half = values["c"] * np.asarray(sigma) / np.sqrt(n)
            intervals = np.column_stack(
                [np.asarray(theta) - half, np.asarray(theta) + half]
            )
    return RegionDecision(
        spec=spec,
        statistic=statistic,
        criticals=dict(values),
        reject=bool(reject),
        intervals=intervals,
    )
