"""Eigendecomposition of the kernel matrix and rank-r truncation.

The rank-r reconstruction from the top-r eigenpairs is the closest rank-r
matrix in both the Frobenius and operator-2 norms, so balancing on the
leading score columns is balancing on the best low-rank surrogate of K.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import KbalanceError, NotPSDError
from .kernel import KernelMatrix

#: hard cap on N for full dense eigendecomposition
MAX_EIG_ROWS = 5000

#: eigenvalues below this fraction of the largest are treated as numerically zero
RANK_RTOL = 1e-10

_PSD_RTOL = 1e-8


@dataclass(frozen=True)
class SpectralBasis:
    """Descending eigenvalues and orthonormal eigenvectors of K."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    total_trace: float

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    @property
    def numerical_rank(self) -> int:
        lam_max = self.eigenvalues[0]
        return int(np.sum(self.eigenvalues > RANK_RTOL * lam_max))


def eigendecompose(km: KernelMatrix) -> SpectralBasis:
    """Full symmetric eigendecomposition of K, eigenvalues descending.

    Slightly negative eigenvalues within the PSD tolerance are clipped to 0;
    anything below that raises. Each eigenvector's sign is fixed so that its
    first numerically nonzero entry is positive.
    """
    n = km.n
    if n > MAX_EIG_ROWS:
        raise KbalanceError(
            f"N={n} exceeds the dense eigendecomposition cap of {MAX_EIG_ROWS}"
        )
    evals, evecs = scipy.linalg.eigh(km.K)
    evals = evals[::-1].copy()
    evecs = evecs[:, ::-1].copy()
    lam_max = max(evals[0], 0.0)
    if evals[-1] < -_PSD_RTOL * max(lam_max, 1.0):
        raise NotPSDError(
            f"kernel matrix not PSD: smallest eigenvalue {evals[-1]:.3e}"
        )
    np.clip(evals, 0.0, None, out=evals)
    # deterministic sign: first entry with non-negligible magnitude is positive
    for j in range(n):
        col = evecs[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if len(nz) and col[nz[0]] < 0:
            evecs[:, j] = -col
    return SpectralBasis(
        eigenvalues=evals, eigenvectors=evecs, total_trace=float(evals.sum())
    )


def _check_r(basis: SpectralBasis, r: int, max_r: int) -> None:
    if not (1 <= r <= max_r):
        raise KbalanceError(f"r={r} outside valid range [1, {max_r}]")


def truncated_scores(basis: SpectralBasis, km: KernelMatrix, r: int) -> np.ndarray:
    """Score matrix S = K V_r with columns rescaled to unit sample sd.

    Mean balance on these columns (plus sum-to-one) is equivalent to balance
    on the rank-r reconstruction of K; the rescaling only equilibrates the
    solver's constraint scales. Columns with (near) zero spread are left
    unscaled; they carry no balance information beyond the weight-sum.
    """
    _check_r(basis, r, basis.numerical_rank)
    scores = km.K @ basis.eigenvectors[:, :r]
    sds = scores.std(axis=0, ddof=1)
    sds = np.where(sds > 1e-12, sds, 1.0)
    return scores / sds


def reconstruct(basis: SpectralBasis, r: int) -> np.ndarray:
    """Rank-r reconstruction V_r diag(lambda_r) V_r^T."""
    _check_r(basis, r, basis.n)
    v = basis.eigenvectors[:, :r]
    return (v * basis.eigenvalues[:r]) @ v.T


def variance_explained(basis: SpectralBasis, r: int) -> float:
    """Fraction of total eigenvalue mass carried by the top r eigenpairs."""
    _check_r(basis, r, basis.n)
    return float(basis.eigenvalues[:r].sum() / basis.total_trace)
