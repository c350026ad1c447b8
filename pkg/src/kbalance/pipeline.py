"""End-to-end run: scaling, kernel, rank scan, weights, estimate, report."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import balance, estimate, spectral
from .data import Dataset, standardize, whiten_mahalanobis
from .kernel import KernelConfig, KernelMatrix, build_kernel_matrix, density_at_points


@dataclass(frozen=True)
class RunConfig:
    """All knobs of one pipeline run; serialized verbatim into reports."""

    estimand: str = "att"
    b: float | None = None  # None -> number of covariate columns
    distance: str = "euclidean"
    exponent_convention: str = "half"
    trimratio: float | None = None
    r_max: int | None = None
    patience: int = balance.DEFAULT_PATIENCE
    tol: float = balance.DEFAULT_TOL
    max_iter: int = balance.DEFAULT_MAX_ITER
    bootstrap: int = 0
    seed: int = 0
    threads: int = 1

    def as_dict(self) -> dict:
        return asdict(self)

    def kernel_config(self, p: int) -> KernelConfig:
        return KernelConfig(
            b=float(p) if self.b is None else float(self.b),
            distance=self.distance,
            exponent_convention=self.exponent_convention,
        )


@dataclass(frozen=True)
class PipelineResult:
    """Everything produced by one run, for reporting and diagnostics."""

    dataset: Dataset
    km: KernelMatrix
    basis: spectral.SpectralBasis
    solution: balance.BalanceSolution
    report: estimate.EstimateReport
    trimmed_rows: np.ndarray = field(default_factory=lambda: np.array([], dtype=int))


def _prepare(ds: Dataset, config: RunConfig) -> KernelMatrix:
    scaled, _ = standardize(ds)
    if config.distance == "mahalanobis":
        scaled, _ = whiten_mahalanobis(scaled)
    return build_kernel_matrix(scaled, config.kernel_config(ds.p))


def _ipw_deviation(km: KernelMatrix, solution: balance.BalanceSolution, estimand: str) -> float:
    if estimand == "att":
        return estimate.ipw_equivalence_diagnostic(km, solution.weights)
    if estimand == "atc":
        p_c = density_at_points(km, None, "control")
        p_t = density_at_points(km, solution.weights, "treated")
        return float(np.max(np.abs(p_c / p_t - 1.0)))
    p_all = density_at_points(km, None, "all")
    p_t = density_at_points(km, solution.weights_treated, "treated")
    p_c = density_at_points(km, solution.weights, "control")
    return float(
        max(np.max(np.abs(p_all / p_t - 1.0)), np.max(np.abs(p_all / p_c - 1.0)))
    )


def run_pipeline(ds: Dataset, config: RunConfig = RunConfig(), run_bootstrap: bool | None = None) -> PipelineResult:
    """Run the full kernel balancing procedure on a raw dataset.

    Optional trimming drops high-density-ratio treated units and rebuilds the
    kernel from the remaining rows. The bootstrap reruns this whole function
    per replicate and is skipped unless requested in the config.
    """
    ds.require_both_groups()
    km = _prepare(ds, config)
    trimmed = np.array([], dtype=int)
    if config.trimratio is not None and np.isfinite(config.trimratio):
        trimmed = balance.trim_treated(km, config.trimratio)
        if len(trimmed):
            keep = np.setdiff1d(np.arange(ds.n), trimmed)
            ds = ds.subset(keep)
            km = _prepare(ds, config)
    basis = spectral.eigendecompose(km)
    solution = balance.scan_r(
        km,
        basis,
        estimand=config.estimand,
        r_max=config.r_max,
        patience=config.patience,
        tol=config.tol,
        max_iter=config.max_iter,
    )

    point = se = ci = None
    if ds.Y is not None:
        w = solution.weight_pair() if config.estimand == "ate" else solution.weights
        point = estimate.weighted_dim(ds.Y, ds.D, w, config.estimand)
        se = estimate.fixed_weight_se(ds.Y, ds.D, w, config.estimand)
        do_boot = config.bootstrap > 0 if run_bootstrap is None else run_bootstrap
        if do_boot:
            boot_config = _without_bootstrap(config)
            _, ci, _ = estimate.bootstrap(ds, boot_config, config.bootstrap, config.seed)

    report = estimate.EstimateReport(
        estimand=config.estimand,
        point=point,
        se_fixed=se,
        ci_boot=ci,
        min90=estimate.min90(solution.weights),
        l1_before=solution.l1_before,
        l1_after=solution.l1_after,
        r=solution.r,
        variance_explained=spectral.variance_explained(basis, solution.r),
        ipw_max_dev=_ipw_deviation(km, solution, config.estimand),
        n_trimmed=len(trimmed),
    )
    return PipelineResult(
        dataset=ds, km=km, basis=basis, solution=solution, report=report,
        trimmed_rows=trimmed,
    )


def _without_bootstrap(config: RunConfig) -> RunConfig:
    d = config.as_dict()
    d["bootstrap"] = 0
    return RunConfig(**d)
