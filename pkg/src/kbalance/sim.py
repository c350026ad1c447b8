"""Data-generating processes and replication studies.

Each DGP is a deterministic function of (n, seed); replications derive their
randomness from (seed, rep) substreams. Hidden diagnostic columns (conflict
intensity, the radial confounder z) are stored next to the dataset and never
enter any balancing input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import expit

from . import balance, baselines, spectral
from .data import Dataset, standardize
from .errors import DataError, KbalanceError
from .kernel import build_kernel_matrix, density_at_points
from .pipeline import RunConfig, run_pipeline


@dataclass(frozen=True)
class SimDraw:
    """One simulated dataset plus its hidden diagnostics."""

    dataset: Dataset
    hidden: dict


@dataclass(frozen=True)
class StudyReport:
    study: str
    replications: int
    seed: int
    summary: pd.DataFrame
    detail: pd.DataFrame | None = None


def dgp_peacekeeping(n: int, seed) -> SimDraw:
    """Civil-war peacekeeping DGP with zero true treatment effect.

    Treatment and outcome both depend only on conflict intensity, which is a
    ratio of two observed covariates and is itself unobserved. The normal
    parameters are read as (mean, variance).
    """
    if n < 50:
        raise DataError("peacekeeping DGP needs n >= 50")
    rng = np.random.default_rng(seed)
    war_duration = np.maximum(1.0, rng.normal(7.0, 3.0, size=n))
    intensity = rng.uniform(100.0, 10000.0, size=n)
    fatalities = intensity * war_duration
    democracy = rng.normal(size=n)
    factionalism = rng.normal(size=n)
    d = rng.binomial(1, expit(intensity / 5000.0 - 2.0), size=n)
    if d.sum() == 0 or d.sum() == n:
        raise KbalanceError("degenerate treatment draw")
    eps = rng.normal(0.0, np.sqrt(0.004), size=n)
    y0 = intensity / 2500.0 + eps
    y1 = y0.copy()  # true effect is zero
    y = np.where(d == 1, y1, y0)
    ds = Dataset(
        X=np.column_stack([war_duration, fatalities, democracy, factionalism]),
        D=d,
        Y=y,
        column_names=["war_duration", "fatalities", "democracy", "factionalism"],
    )
    return SimDraw(dataset=ds, hidden={"intensity": intensity, "y0": y0, "y1": y1})


def dgp_logistic_1d(n: int = 200, seed=0) -> SimDraw:
    """One standard-normal covariate; P(D=1|X) = 1/(1+exp(2-2X)); no outcome."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    d = rng.binomial(1, 1.0 / (1.0 + np.exp(2.0 - 2.0 * x)), size=n)
    if d.sum() == 0 or d.sum() == n:
        raise KbalanceError("degenerate treatment draw")
    ds = Dataset(X=x[:, None], D=d, column_names=["x"])
    return SimDraw(dataset=ds, hidden={})


def dgp_z5(n: int = 500, seed=0) -> SimDraw:
    """Five standard-normal covariates; treatment depends on z = sqrt(x1^2+x2^2)."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 5))
    z = np.sqrt(x[:, 0] ** 2 + x[:, 1] ** 2)
    d = rng.binomial(1, expit(z - 2.0), size=n)
    if d.sum() == 0 or d.sum() == n:
        raise KbalanceError("degenerate treatment draw")
    ds = Dataset(X=x, D=d, column_names=[f"x{j+1}" for j in range(5)])
    return SimDraw(dataset=ds, hidden={"z": z})


def _weighted_std_diff(values, D, control_weights) -> float:
    """Standardized treated-vs-weighted-control mean gap on one column."""
    values = np.asarray(values, dtype=float)
    sd = values.std(ddof=1)
    mean_t = values[D == 1].mean()
    if control_weights is None:
        mean_c = values[D == 0].mean()
    else:
        mean_c = control_weights @ values[D == 0]
    return float((mean_t - mean_c) / sd)


_FIG12_METHODS = ["raw", "matching", "matching_plus", "mean_balance", "kbal"]


def _figure12_one_rep(draw: SimDraw, config: RunConfig) -> list[dict]:
    ds = draw.dataset
    intensity = draw.hidden["intensity"]
    rows = []

    def record(method, point, control_weights):
        row = {"method": method, "estimate": point}
        for j, name in enumerate(ds.column_names):
            row[f"imb_{name}"] = abs(_weighted_std_diff(ds.X[:, j], ds.D, control_weights))
        row["imb_intensity"] = abs(_weighted_std_diff(intensity, ds.D, control_weights))
        rows.append(row)

    record("raw", baselines.raw_dim(ds).point, None)
    m1 = baselines.mahalanobis_match(ds, "none")
    record("matching", m1.point, m1.weights)
    m2 = baselines.mahalanobis_match(ds, "squares_and_interactions")
    record("matching_plus", m2.point, m2.weights)
    mb = baselines.mean_balance_x(ds, "att", "none")
    record("mean_balance", mb.point, mb.weights)
    kb = run_pipeline(ds, config)
    record("kbal", kb.report.point, kb.solution.weights)
    return rows


def _study_figure12(reps: int, seed: int, config: RunConfig) -> StudyReport:
    records = []
    for rep in range(reps):
        draw = dgp_peacekeeping(500, np.random.default_rng([seed, rep]))
        for row in _figure12_one_rep(draw, config):
            records.append({"rep": rep, **row})
    detail = pd.DataFrame.from_records(records)
    agg = []
    for method, grp in detail.groupby("method", sort=False):
        entry = {
            "method": method,
            "mean_bias": float(grp["estimate"].mean()),  # true effect is zero
            "sd": float(grp["estimate"].std(ddof=1)) if reps > 1 else 0.0,
        }
        for col in grp.columns:
            if col.startswith("imb_"):
                entry[f"mean_{col}"] = float(grp[col].mean())
        agg.append(entry)
    return StudyReport(
        study="figure12", replications=reps, seed=seed,
        summary=pd.DataFrame.from_records(agg), detail=detail,
    )


def _study_density_fig(seed: int, config: RunConfig) -> StudyReport:
    draw = dgp_logistic_1d(200, seed)
    ds = draw.dataset
    result = run_pipeline(ds, config)
    km = result.km
    table = pd.DataFrame(
        {
            "x": ds.X[:, 0],
            "d": ds.D,
            "p_treated": density_at_points(km, None, "treated"),
            "p_control": density_at_points(km, None, "control"),
            "p_control_weighted": density_at_points(km, result.solution.weights, "control"),
        }
    )
    summary = pd.DataFrame.from_records(
        [
            {
                "l1_before": result.report.l1_before,
                "l1_after": result.report.l1_after,
                "r": result.report.r,
                "max_density_gap": float(
                    np.max(np.abs(table["p_treated"] - table["p_control_weighted"]))
                ),
            }
        ]
    )
    return StudyReport(
        study="density_fig", replications=1, seed=seed, summary=summary, detail=table
    )


def rscan_grid(ds: Dataset, hidden_values, config: RunConfig, r_max: int = 100) -> pd.DataFrame:
    """L1 and hidden-confounder imbalance at every rank up to r_max (ATT)."""
    scaled, _ = standardize(ds)
    km = build_kernel_matrix(scaled, config.kernel_config(ds.p))
    basis = spectral.eigendecompose(km)
    r_cap = min(r_max, basis.numerical_rank)
    rows = []
    for r in range(1, r_cap + 1):
        scores = spectral.truncated_scores(basis, km, r)
        target = balance.make_targets(scores, ds.D, "att")
        fit = balance.entropy_solve(
            scores[target.donor_rows], target.target_means, config.tol, config.max_iter
        )
        if fit.converged:
            l1 = balance.l1_imbalance(km, fit.weights, "att")
            z_imb = abs(_weighted_std_diff(hidden_values, ds.D, fit.weights))
        else:
            l1, z_imb = np.inf, np.nan
        rows.append({"r": r, "l1": l1, "hidden_imbalance": z_imb})
    return pd.DataFrame.from_records(rows)


def _study_rscan(reps: int, seed: int, config: RunConfig) -> StudyReport:
    details = []
    agg = []
    for rep in range(reps):
        draw = dgp_z5(500, np.random.default_rng([seed, rep]))
        grid = rscan_grid(draw.dataset, draw.hidden["z"], config)
        grid.insert(0, "rep", rep)
        details.append(grid)
        feasible = grid[np.isfinite(grid["l1"])]
        chosen = feasible.loc[feasible["l1"].idxmin()]
        agg.append(
            {
                "rep": rep,
                "chosen_r": int(chosen["r"]),
                "l1_at_chosen": float(chosen["l1"]),
                "hidden_imbalance_at_chosen": float(chosen["hidden_imbalance"]),
                "min_hidden_imbalance": float(feasible["hidden_imbalance"].min()),
            }
        )
    return StudyReport(
        study="rscan_fig", replications=reps, seed=seed,
        summary=pd.DataFrame.from_records(agg), detail=pd.concat(details, ignore_index=True),
    )


def run_study(study: str, reps: int, seed: int, config: RunConfig = RunConfig()) -> StudyReport:
    """Run one replication study and aggregate it into a tidy report."""
    if reps < 1:
        raise DataError("reps must be >= 1")
    if study == "figure12":
        return _study_figure12(reps, seed, config)
    if study == "density_fig":
        return _study_density_fig(seed, config)
    if study == "rscan_fig":
        return _study_rscan(reps, seed, config)
    raise DataError(f"unknown study {study!r}")
