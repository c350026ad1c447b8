"""Gaussian kernel evaluation, kernel matrix assembly, and smoothed densities.

The kernel matrix rows double as feature vectors (each unit described by its
similarity to every unit) and, after rescaling by 1/sqrt(2*pi*b), as kernel
density estimates evaluated at every observation.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .data import Dataset
from .errors import DataError, KbalanceError

#: hard cap on N for dense kernel assembly
MAX_KERNEL_ROWS = 20000

_HEADER_MAGIC = b"KBALKMAT"


@dataclass(frozen=True)
class KernelConfig:
    """Kernel scale and distance options.

    ``exponent_convention`` selects the denominator of the squared distance:
    ``half`` uses exp(-d^2 / (2b)), ``full`` uses exp(-d^2 / b).
    """

    b: float
    distance: str = "euclidean"
    exponent_convention: str = "half"

    def __post_init__(self):
        if not (self.b > 0):
            raise DataError(f"kernel scale b must be positive, got {self.b}")
        if self.distance not in ("euclidean", "mahalanobis"):
            raise DataError(f"unknown distance {self.distance!r}")
        if self.exponent_convention not in ("half", "full"):
            raise DataError(f"unknown exponent convention {self.exponent_convention!r}")

    @property
    def denominator(self) -> float:
        return 2.0 * self.b if self.exponent_convention == "half" else self.b


def default_config(p: int, **kwargs) -> KernelConfig:
    """Default kernel scale b = number of covariate columns."""
    return KernelConfig(b=float(p), **kwargs)


@dataclass(frozen=True)
class KernelMatrix:
    """N x N Gaussian similarity matrix with the treated/control row split."""

    K: np.ndarray
    treated_rows: np.ndarray
    control_rows: np.ndarray
    config: KernelConfig

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def n_treated(self) -> int:
        return len(self.treated_rows)

    @property
    def n_control(self) -> int:
        return len(self.control_rows)

    @property
    def kt(self) -> np.ndarray:
        """Treated row block (N1 x N)."""
        return self.K[self.treated_rows, :]

    @property
    def kc(self) -> np.ndarray:
        """Control row block (N0 x N)."""
        return self.K[self.control_rows, :]


def gaussian_kernel(x_i, x_j, config: KernelConfig) -> float:
    """Similarity exp(-||x_i - x_j||^2 / (2b)) between two covariate vectors."""
    x_i = np.atleast_1d(np.asarray(x_i, dtype=float))
    x_j = np.atleast_1d(np.asarray(x_j, dtype=float))
    if x_i.shape != x_j.shape:
        raise DataError("kernel inputs must have the same length")
    if not (np.all(np.isfinite(x_i)) and np.all(np.isfinite(x_j))):
        raise DataError("non-finite kernel input")
    d2 = float(np.sum((x_i - x_j) ** 2))
    return math.exp(-d2 / config.denominator)


def build_kernel_matrix(ds: Dataset, config: KernelConfig) -> KernelMatrix:
    """Assemble the full pairwise kernel matrix for a standardized dataset.

    The upper triangle is computed once and mirrored, the diagonal is exactly 1.
    """
    if ds.n > MAX_KERNEL_ROWS:
        raise KbalanceError(
            f"N={ds.n} exceeds the dense kernel cap of {MAX_KERNEL_ROWS} rows"
        )
    d2 = pdist(ds.X, metric="sqeuclidean")
    K = squareform(np.exp(-d2 / config.denominator))
    np.fill_diagonal(K, 1.0)
    return KernelMatrix(
        K=K,
        treated_rows=ds.treated_rows,
        control_rows=ds.control_rows,
        config=config,
    )


def _group_rows(km: KernelMatrix, group: str) -> np.ndarray:
    if group == "treated":
        return km.treated_rows
    if group == "control":
        return km.control_rows
    if group == "all":
        return np.arange(km.n)
    raise DataError(f"unknown group {group!r}")


def density_at_points(km: KernelMatrix, weights=None, group: str = "treated") -> np.ndarray:
    """Smoothed density of one group evaluated at all N observation positions.

    Returns (1/sqrt(2*pi*b)) * K_group^T w, with uniform w when no weights are
    given. The normalizing constant follows the univariate Parzen form for any
    covariate dimension, which rescales both groups identically.
    """
    rows = _group_rows(km, group)
    m = len(rows)
    if m == 0:
        raise DataError(f"group {group!r} is empty")
    if weights is None:
        w = np.full(m, 1.0 / m)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (m,):
            raise DataError(f"weight length {w.shape} does not match group size {m}")
        if np.any(w < 0):
            raise DataError("negative weight")
        if abs(w.sum() - 1.0) > 1e-10:
            raise DataError(f"weights must sum to 1, got {w.sum()!r}")
    scale = 1.0 / math.sqrt(2.0 * math.pi * km.config.b)
    return scale * (km.K[rows, :].T @ w)


def explicit_feature_map(x: float, d_max: int) -> np.ndarray:
    """Truncated explicit feature vector for the scalar Gaussian kernel at b=0.5.

    Entry d is sqrt(2^d / d!) * exp(-x^2) * x^d; the inner product of two such
    vectors converges to exp(-(x-y)^2) as d_max grows.
    """
    if d_max < 0:
        raise DataError("d_max must be nonnegative")
    if d_max > 170:
        raise DataError("d_max > 170 would overflow the factorial")
    phi = np.empty(d_max + 1)
    coef = 1.0  # sqrt(2^d / d!), built up iteratively
    xb = math.exp(-x * x)
    xd = 1.0
    for d in range(d_max + 1):
        phi[d] = coef * xb * xd
        xd *= x
        coef *= math.sqrt(2.0 / (d + 1))
    return phi


def save_kernel(km: KernelMatrix, path) -> None:
    """Dump K as row-major doubles behind a 16-byte header (magic + u32 N)."""
    with open(path, "wb") as f:
        f.write(_HEADER_MAGIC)
        f.write(struct.pack("<I4x", km.n))
        f.write(np.ascontiguousarray(km.K, dtype="<f8").tobytes())


def load_kernel(path, treated_rows, control_rows, config: KernelConfig) -> KernelMatrix:
    """Read a kernel matrix written by :func:`save_kernel`."""
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) != 16 or header[:8] != _HEADER_MAGIC:
            raise DataError(f"not a kernel matrix dump: {path}")
        (n,) = struct.unpack("<I4x", header[8:])
        K = np.frombuffer(f.read(), dtype="<f8").reshape(n, n)
    return KernelMatrix(
        K=K.copy(),
        treated_rows=np.asarray(treated_rows),
        control_rows=np.asarray(control_rows),
        config=config,
    )
