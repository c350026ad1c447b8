"""Kernel balancing: control-unit weights that equalize treated/control means
on the columns of a Gaussian kernel matrix, with treatment-effect estimation,
diagnostics, baselines, and simulation studies."""

__version__ = "0.1.0"

from .balance import (  # noqa: F401
    BalanceSolution,
    BalanceTarget,
    entropy_solve,
    l1_imbalance,
    make_targets,
    scan_r,
    trim_treated,
)
from .data import (  # noqa: F401
    Dataset,
    ScalingInfo,
    fetch_benchmark,
    load_csv,
    load_lalonde,
    standardize,
    whiten_mahalanobis,
    write_csv,
)
from .errors import (  # noqa: F401
    BenchmarkFetchError,
    DataError,
    InfeasibleBalanceError,
    KbalanceError,
    NotPSDError,
)
from .estimate import (  # noqa: F401
    EstimateReport,
    bootstrap,
    fixed_weight_se,
    ipw_equivalence_diagnostic,
    min90,
    weighted_dim,
)
from .kernel import (  # noqa: F401
    KernelConfig,
    KernelMatrix,
    build_kernel_matrix,
    density_at_points,
    explicit_feature_map,
    gaussian_kernel,
)
from .pipeline import PipelineResult, RunConfig, run_pipeline  # noqa: F401
from .spectral import (  # noqa: F401
    SpectralBasis,
    eigendecompose,
    reconstruct,
    truncated_scores,
    variance_explained,
)
