"""Weighted difference-in-means estimation, standard errors, and diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .data import Dataset
from .errors import DataError, KbalanceError
from .kernel import KernelMatrix, density_at_points


@dataclass(frozen=True)
class EstimateReport:
    """Point estimate plus the weight and balance diagnostics around it."""

    estimand: str
    point: float | None
    se_fixed: float | None
    ci_boot: tuple | None
    min90: int
    l1_before: float
    l1_after: float
    r: int
    variance_explained: float
    ipw_max_dev: float
    n_trimmed: int

    def as_dict(self) -> dict:
        return asdict(self)


def _split(Y, D):
    Y = np.asarray(Y, dtype=float)
    D = np.asarray(D)
    return Y[D == 1], Y[D == 0]


def weighted_dim(Y, D, w, estimand: str = "att") -> float:
    """Weighted difference in group mean outcomes.

    ``w`` is the donor-group weight vector (controls for att, treated for
    atc) or the (treated, control) weight pair for ate.
    """
    if Y is None:
        raise DataError("outcome Y is required for estimation")
    y_t, y_c = _split(Y, D)
    if estimand == "att":
        return float(y_t.mean() - np.asarray(w) @ y_c)
    if estimand == "atc":
        return float(np.asarray(w) @ y_t - y_c.mean())
    if estimand == "ate":
        w_t, w_c = w
        return float(np.asarray(w_t) @ y_t - np.asarray(w_c) @ y_c)
    raise DataError(f"unknown estimand {estimand!r}")


def _weighted_var_term(y, w):
    """Variance contribution sum(w_i^2 (y_i - mu_w)^2) * m/(m-1)."""
    m = len(y)
    if m < 2:
        raise DataError("need at least 2 units per group for a standard error")
    mu = w @ y
    return float(np.sum(w**2 * (y - mu) ** 2) * m / (m - 1))


def fixed_weight_se(Y, D, w, estimand: str = "att") -> float:
    """Standard error treating the balancing weights as fixed.

    With uniform weights each term reduces to the classical s^2/m of the
    unequal-variance two-sample formula.
    """
    y_t, y_c = _split(Y, D)
    if min(len(y_t), len(y_c)) < 2:
        raise DataError("need at least 2 units per group for a standard error")
    if estimand == "att":
        return float(np.sqrt(y_t.var(ddof=1) / len(y_t) + _weighted_var_term(y_c, np.asarray(w))))
    if estimand == "atc":
        return float(np.sqrt(y_c.var(ddof=1) / len(y_c) + _weighted_var_term(y_t, np.asarray(w))))
    if estimand == "ate":
        w_t, w_c = w
        return float(np.sqrt(_weighted_var_term(y_t, np.asarray(w_t)) + _weighted_var_term(y_c, np.asarray(w_c))))
    raise DataError(f"unknown estimand {estimand!r}")


def min90(w) -> int:
    """Smallest number of donors whose weights cover 90% of the total weight."""
    w = np.asarray(w, dtype=float)
    if len(w) == 0 or np.any(w < 0):
        raise DataError("invalid weights")
    sorted_desc = np.sort(w)[::-1]
    cum = np.cumsum(sorted_desc)
    return int(np.searchsorted(cum, 0.9 * w.sum() - 1e-15) + 1)


def ipw_equivalence_diagnostic(km: KernelMatrix, w) -> float:
    """Max deviation from 1 of the treated/weighted-control density ratio.

    Converged kernel balancing makes the implied stabilized inverse
    propensity weights constant, so this approaches 0 at full rank.
    """
    p_t = density_at_points(km, None, "treated")
    p_c = density_at_points(km, np.asarray(w, dtype=float), "control")
    if np.any(p_c <= 0):
        raise KbalanceError("zero weighted-control density encountered")
    return float(np.max(np.abs(p_t / p_c - 1.0)))


def bootstrap(ds: Dataset, config, B: int, seed: int):
    """Stratified unit-level bootstrap of the whole weighting pipeline.

    Each replicate resamples treated and control rows separately (preserving
    N1/N0), reruns standardization, kernel assembly, rank scan, and the
    estimate. Replicates with no feasible solution are dropped with
    accounting; more than 20% of them is an error. Returns
    (se_boot, (ci_lo, ci_hi), n_infeasible); deterministic given the seed.
    """
    from .pipeline import run_pipeline  # local import to avoid a cycle

    if B < 1:
        raise DataError("bootstrap requires B >= 1")
    if ds.Y is None:
        raise DataError("outcome Y is required for the bootstrap")
    treated = ds.treated_rows
    control = ds.control_rows
    estimates = []
    n_infeasible = 0
    for rep in range(B):
        rng = np.random.default_rng([seed, rep])
        rows = np.concatenate([
            rng.choice(treated, size=len(treated), replace=True),
            rng.choice(control, size=len(control), replace=True),
        ])
        try:
            result = run_pipeline(ds.subset(rows), config)
            estimates.append(result.report.point)
        except KbalanceError:
            n_infeasible += 1
    if n_infeasible > 0.2 * B:
        raise KbalanceError(
            f"bootstrap: {n_infeasible}/{B} replicates infeasible; "
            "consider a larger b or trimming"
        )
    est = np.sort(np.asarray(estimates, dtype=float))
    se = float(est.std(ddof=1)) if len(est) > 1 else 0.0
    lo, hi = np.percentile(est, [2.5, 97.5])
    return se, (float(lo), float(hi)), n_infeasible
