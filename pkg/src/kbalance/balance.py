"""Entropy-balancing weights on kernel principal-component scores.

The solver works on the dual of the KL-to-uniform problem: weights take the
exponential form w_i = exp(z_i . lam) / sum_j exp(z_j . lam), and the dual
variables are found by damped Newton iteration on the moment conditions.
Infeasibility at a given rank is a recoverable signal so the rank scan can
skip past it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InfeasibleBalanceError
from .kernel import KernelMatrix, density_at_points
from .spectral import SpectralBasis, truncated_scores

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200
DEFAULT_PATIENCE = 15
DEFAULT_R_CAP = 500

_MAX_HALVINGS = 30


def _logsumexp(v: np.ndarray) -> float:
    m = v.max()
    return float(m + np.log(np.exp(v - m).sum()))


@dataclass(frozen=True)
class BalanceTarget:
    """Donor rows and the score means their weighted mean must hit."""

    estimand: str
    donor_rows: np.ndarray
    target_means: np.ndarray


@dataclass(frozen=True)
class EntropyFit:
    """Raw output of one dual solve."""

    weights: np.ndarray
    dual: np.ndarray
    converged: bool
    iterations: int


@dataclass(frozen=True)
class BalanceSolution:
    """Chosen weights with the rank-scan diagnostics attached.

    For the ate estimand ``weights`` holds the control-group weights and
    ``weights_treated`` the treated-group weights; otherwise
    ``weights_treated`` is None and ``weights`` covers the single donor group.
    """

    weights: np.ndarray
    dual: np.ndarray
    r: int
    l1_before: float
    l1_after: float
    converged: bool
    iterations: int
    feasible_r_grid: list = field(default_factory=list)
    weights_treated: np.ndarray | None = None

    def weight_pair(self):
        """(treated weights, control weights) for the ate estimand."""
        return self.weights_treated, self.weights


def make_targets(scores: np.ndarray, D: np.ndarray, estimand: str):
    """Balance targets for one estimand.

    att: controls are donors, treated column means are the target.
    atc: the mirror image. ate: both groups are donors toward the grand mean;
    a pair of targets is returned.
    """
    D = np.asarray(D)
    treated = np.flatnonzero(D == 1)
    control = np.flatnonzero(D == 0)
    if len(treated) == 0 or len(control) == 0:
        raise DataError("empty donor or target group")
    if estimand == "att":
        return BalanceTarget("att", control, scores[treated].mean(axis=0))
    if estimand == "atc":
        return BalanceTarget("atc", treated, scores[control].mean(axis=0))
    if estimand == "ate":
        grand = scores.mean(axis=0)
        return (
            BalanceTarget("ate", treated, grand),
            BalanceTarget("ate", control, grand),
        )
    raise DataError(f"unknown estimand {estimand!r}")


def entropy_solve(
    donor_scores: np.ndarray,
    target: np.ndarray,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> EntropyFit:
    """Minimum-KL-to-uniform weights matching the target score means.

    Damped Newton on the dual with step halving; a singular Hessian gets a
    small ridge before the step is abandoned. Non-convergence is reported via
    the ``converged`` flag, not an exception.
    """
    z = np.atleast_2d(np.asarray(donor_scores, dtype=float))
    t = np.atleast_1d(np.asarray(target, dtype=float))
    if not np.all(np.isfinite(t)):
        raise DataError("non-finite balance target")
    m, r = z.shape
    if m < 1:
        raise DataError("no donor units")
    # center on the target so the objective is logsumexp(zc @ lam)
    zc = z - t

    lam = np.zeros(r)
    obj = _logsumexp(zc @ lam)
    w = np.full(m, 1.0 / m)
    eye = np.eye(r)
    ridge = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        grad = zc.T @ w
        if np.max(np.abs(grad)) <= tol:
            return EntropyFit(weights=w, dual=lam, converged=True, iterations=it - 1)
        hess = (zc * w[:, None]).T @ zc - np.outer(grad, grad)
        # near the optimum the per-step decrease falls below float64
        # resolution of the objective; accept a full Newton step whose
        # change is within that resolution and let the gradient test decide
        flat = 4.0 * np.finfo(float).eps * max(1.0, abs(obj))
        # damped Newton: escalate the ridge until a step decreases the dual
        improved = False
        for _ in range(12):
            try:
                step = np.linalg.solve(hess + ridge * eye if ridge else hess, -grad)
            except np.linalg.LinAlgError:
                step = None
            if step is not None and np.all(np.isfinite(step)):
                scale = 1.0
                for _ in range(_MAX_HALVINGS):
                    lam_new = lam + scale * step
                    obj_new = _logsumexp(zc @ lam_new)
                    if obj_new < obj or (scale == 1.0 and obj_new <= obj + flat):
                        improved = True
                        break
                    scale *= 0.5
                if improved:
                    break
            ridge = max(ridge * 100.0, 1e-10)
        if not improved:
            break
        ridge /= 10.0
        lam = lam_new
        obj = obj_new
        logw = zc @ lam
        if logw.max() < 0.0:
            # separating hyperplane: z_i . lam < t . lam for every donor, so
            # the target is strictly outside the hull and the dual is unbounded
            break
        w = np.exp(logw - _logsumexp(logw))

    grad = zc.T @ w
    converged = bool(np.max(np.abs(grad)) <= tol)
    return EntropyFit(weights=w, dual=lam, converged=converged, iterations=it)


def _density_gap(km: KernelMatrix, target_group, donor_group, donor_weights) -> float:
    p_target = density_at_points(km, None, target_group)
    p_donor = density_at_points(km, donor_weights, donor_group)
    return 0.5 * float(np.abs(p_target - p_donor).sum())


def l1_imbalance(km: KernelMatrix, weights=None, estimand: str = "att") -> float:
    """Half the summed pointwise gap between the two smoothed densities.

    For ate this is the worse of the two group-vs-grand gaps. Uniform donor
    weights are used when none are given.
    """
    if estimand == "att":
        return _density_gap(km, "treated", "control", weights)
    if estimand == "atc":
        return _density_gap(km, "control", "treated", weights)
    if estimand == "ate":
        w_t, w_c = weights if weights is not None else (None, None)
        return max(
            _density_gap(km, "all", "treated", w_t),
            _density_gap(km, "all", "control", w_c),
        )
    raise DataError(f"unknown estimand {estimand!r}")


def scan_r(
    km: KernelMatrix,
    basis: SpectralBasis,
    estimand: str = "att",
    r_max: int | None = None,
    patience: int = DEFAULT_PATIENCE,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> BalanceSolution:
    """Scan r upward, solve at each rank, and keep the L1-argmin solution.

    Infeasible ranks are recorded with L1 = +inf; the scan stops once
    `patience` consecutive ranks fail to improve on the running minimum.
    Ties prefer smaller r.
    """
    if patience < 1:
        raise DataError("patience must be >= 1")
    rank = basis.numerical_rank
    r_cap = min(rank, DEFAULT_R_CAP) if r_max is None else min(r_max, rank)
    D = np.zeros(km.n, dtype=int)
    D[km.treated_rows] = 1

    # identical to truncated_scores(basis, km, r) column-sliced at each r
    all_scores = truncated_scores(basis, km, r_cap)

    l1_before = l1_imbalance(km, None, estimand)
    grid: list[tuple[int, float]] = []
    best = None
    best_l1 = math.inf
    stale = 0
    for r in range(1, r_cap + 1):
        scores = all_scores[:, :r]
        targets = make_targets(scores, D, estimand)
        if estimand == "ate":
            fit_t = entropy_solve(scores[targets[0].donor_rows], targets[0].target_means, tol, max_iter)
            fit_c = entropy_solve(scores[targets[1].donor_rows], targets[1].target_means, tol, max_iter)
            feasible = fit_t.converged and fit_c.converged
            if feasible:
                l1 = l1_imbalance(km, (fit_t.weights, fit_c.weights), estimand)
                fit = (fit_t, fit_c)
        else:
            fit = entropy_solve(scores[targets.donor_rows], targets.target_means, tol, max_iter)
            feasible = fit.converged
            if feasible:
                l1 = l1_imbalance(km, fit.weights, estimand)
        if not feasible:
            l1 = math.inf
        grid.append((r, l1))
        if l1 < best_l1:
            best_l1 = l1
            best = (r, fit)
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break

    if best is None:
        raise InfeasibleBalanceError(
            "no feasible rank found; consider a larger kernel scale b or trimming"
        )
    r_star, fit = best
    if estimand == "ate":
        fit_t, fit_c = fit
        return BalanceSolution(
            weights=fit_c.weights,
            dual=fit_c.dual,
            r=r_star,
            l1_before=l1_before,
            l1_after=best_l1,
            converged=True,
            iterations=fit_t.iterations + fit_c.iterations,
            feasible_r_grid=grid,
            weights_treated=fit_t.weights,
        )
    return BalanceSolution(
        weights=fit.weights,
        dual=fit.dual,
        r=r_star,
        l1_before=l1_before,
        l1_after=best_l1,
        converged=True,
        iterations=fit.iterations,
        feasible_r_grid=grid,
    )


def trim_treated(km: KernelMatrix, trimratio: float) -> np.ndarray:
    """Treated units whose density ratio vs. the controls exceeds trimratio.

    Ratios use pre-balancing uniform-weight densities. Returns the (possibly
    empty) array of trimmed treated row indices; trimming everyone raises.
    """
    if not (trimratio > 0):
        raise DataError("trimratio must be positive")
    p_t = density_at_points(km, None, "treated")
    p_c = density_at_points(km, None, "control")
    ratio = p_t[km.treated_rows] / p_c[km.treated_rows]
    trimmed = km.treated_rows[ratio > trimratio]
    if len(trimmed) == len(km.treated_rows):
        raise InfeasibleBalanceError("trimratio would remove every treated unit")
    return trimmed
