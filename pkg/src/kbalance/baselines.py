"""Comparison estimators: raw difference in means, entropy balancing on the
raw covariates, Mahalanobis nearest-neighbor matching, and least squares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.linalg
from scipy.spatial.distance import cdist

from .balance import entropy_solve
from .data import Dataset, standardize, whiten_mahalanobis
from .errors import DataError, InfeasibleBalanceError


@dataclass(frozen=True)
class BaselineResult:
    method: str
    point: float | None
    weights: np.ndarray | None
    balance_table: pd.DataFrame
    dropped_columns: list


def _std_diffs(ds: Dataset, control_weights=None) -> np.ndarray:
    """Standardized treated-minus-control mean differences per covariate.

    The denominator is the unweighted full-sample sd; the control mean is
    weighted when weights are given.
    """
    x_t = ds.X[ds.treated_rows]
    x_c = ds.X[ds.control_rows]
    sd = ds.X.std(axis=0, ddof=1)
    sd = np.where(sd > 1e-12, sd, 1.0)
    mean_c = x_c.mean(axis=0) if control_weights is None else control_weights @ x_c
    return (x_t.mean(axis=0) - mean_c) / sd


def balance_table(ds: Dataset, control_weights=None) -> pd.DataFrame:
    before = _std_diffs(ds)
    after = _std_diffs(ds, control_weights)
    return pd.DataFrame(
        {
            "covariate": ds.column_names,
            "std_diff_before": before,
            "std_diff_after": after,
        }
    )


def expand_covariates(ds: Dataset, expansion: str) -> Dataset:
    """Augment X with squares of continuous columns and pairwise products.

    Continuous means more than two distinct values; binary indicators get no
    squared term (it would duplicate the column).
    """
    if expansion == "none":
        return ds
    X = ds.X
    names = list(ds.column_names)
    cols = [X]
    continuous = [j for j in range(X.shape[1]) if len(np.unique(X[:, j])) > 2]
    sq = X[:, continuous] ** 2
    cols.append(sq)
    names += [f"{ds.column_names[j]}^2" for j in continuous]
    if expansion == "squares_and_interactions":
        inter = []
        for a in range(X.shape[1]):
            for b in range(a + 1, X.shape[1]):
                inter.append(X[:, a] * X[:, b])
                names.append(f"{ds.column_names[a]}*{ds.column_names[b]}")
        cols.append(np.column_stack(inter))
    elif expansion != "squares":
        raise DataError(f"unknown expansion {expansion!r}")
    return Dataset(X=np.column_stack(cols), D=ds.D, Y=ds.Y, column_names=names)


def drop_collinear(X: np.ndarray, names: list) -> tuple[np.ndarray, list, list]:
    """Drop collinear columns via pivoted QR with a 1e-10 relative threshold."""
    _, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    thresh = 1e-10 * (diag[0] if diag[0] > 0 else 1.0)
    rank = int(np.sum(diag > thresh))
    keep = np.sort(piv[:rank])
    dropped = [names[j] for j in sorted(piv[rank:])]
    return X[:, keep], [names[j] for j in keep], dropped


def raw_dim(ds: Dataset) -> BaselineResult:
    """Unweighted difference of group mean outcomes."""
    ds.require_both_groups()
    if ds.Y is None:
        raise DataError("outcome Y is required")
    point = float(ds.Y[ds.treated_rows].mean() - ds.Y[ds.control_rows].mean())
    return BaselineResult(
        method="raw_dim",
        point=point,
        weights=None,
        balance_table=balance_table(ds),
        dropped_columns=[],
    )


def mean_balance_x(ds: Dataset, estimand: str = "att", expansion: str = "none") -> BaselineResult:
    """Entropy balancing directly on the (optionally expanded) covariates."""
    if estimand not in ("att", "atc"):
        raise DataError("mean_balance_x supports att and atc")
    ds.require_both_groups()
    expanded = expand_covariates(ds, expansion)
    scaled, _ = standardize(expanded)
    Z, kept, dropped = drop_collinear(scaled.X, scaled.column_names)
    donors = scaled.control_rows if estimand == "att" else scaled.treated_rows
    targets_rows = scaled.treated_rows if estimand == "att" else scaled.control_rows
    fit = entropy_solve(Z[donors], Z[targets_rows].mean(axis=0))
    if not fit.converged:
        raise InfeasibleBalanceError("mean balance on X is infeasible for this sample")
    point = None
    if ds.Y is not None:
        if estimand == "att":
            point = float(ds.Y[ds.treated_rows].mean() - fit.weights @ ds.Y[ds.control_rows])
        else:
            point = float(fit.weights @ ds.Y[ds.treated_rows] - ds.Y[ds.control_rows].mean())
    control_weights = fit.weights if estimand == "att" else None
    return BaselineResult(
        method="mean_balance_x",
        point=point,
        weights=fit.weights,
        balance_table=balance_table(expanded, control_weights),
        dropped_columns=dropped,
    )


def mahalanobis_match(ds: Dataset, expansion: str = "none") -> BaselineResult:
    """1-nearest-neighbor Mahalanobis matching with replacement (ATT).

    Ties go to the lowest-index control. Control weights are proportional to
    match counts, normalized to sum to one.
    """
    ds.require_both_groups()
    expanded = expand_covariates(ds, expansion)
    scaled, _ = standardize(expanded)
    white, _ = whiten_mahalanobis(scaled)
    dists = cdist(white.X[white.treated_rows], white.X[white.control_rows])
    matched = np.argmin(dists, axis=1)  # argmin resolves ties to the lowest index
    counts = np.bincount(matched, minlength=len(white.control_rows)).astype(float)
    weights = counts / counts.sum()
    point = None
    if ds.Y is not None:
        y_t = ds.Y[ds.treated_rows]
        y_m = ds.Y[ds.control_rows][matched]
        point = float(np.mean(y_t - y_m))
    return BaselineResult(
        method="mahalanobis_match",
        point=point,
        weights=weights,
        balance_table=balance_table(expanded, weights),
        dropped_columns=[],
    )


def least_squares(ds: Dataset, expansion: str = "none") -> BaselineResult:
    """Coefficient on treatment from least squares of Y on [1, D, X]."""
    ds.require_both_groups()
    if ds.Y is None:
        raise DataError("outcome Y is required")
    expanded = expand_covariates(ds, expansion)
    Z, kept, dropped = drop_collinear(expanded.X, expanded.column_names)
    design = np.column_stack([np.ones(ds.n), expanded.D.astype(float), Z])
    coef, _, rank, _ = np.linalg.lstsq(design, expanded.Y, rcond=None)
    if rank < design.shape[1]:
        raise DataError("design matrix rank deficient after collinear-column drop")
    return BaselineResult(
        method="least_squares",
        point=float(coef[1]),
        weights=None,
        balance_table=balance_table(expanded),
        dropped_columns=dropped,
    )
