"""Shared fixtures: small deterministic datasets and kernel helpers."""

import numpy as np
import pytest

from kbalance.data import Dataset, standardize
from kbalance.kernel import KernelConfig, build_kernel_matrix


def make_dataset(n=40, p=3, seed=0, with_y=True, treated_frac=0.4):
    """Random dataset with a covariate-dependent outcome and no true effect."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    n1 = max(1, int(round(treated_frac * n)))
    D = np.zeros(n, dtype=int)
    D[rng.choice(n, size=n1, replace=False)] = 1
    Y = X @ rng.normal(size=p) + rng.normal(scale=0.1, size=n) if with_y else None
    return Dataset(X=X, D=D, Y=Y, column_names=[f"x{j}" for j in range(p)])


def make_identical_groups(m=12, p=2, seed=3, with_y=True):
    """Treated multiset equals the control multiset exactly."""
    rng = np.random.default_rng(seed)
    Xg = rng.normal(size=(m, p))
    yg = rng.normal(size=m)
    X = np.vstack([Xg, Xg])
    D = np.concatenate([np.ones(m, dtype=int), np.zeros(m, dtype=int)])
    Y = np.concatenate([yg, yg]) if with_y else None
    return Dataset(X=X, D=D, Y=Y)


def kernel_of(ds, b=None, **kwargs):
    """Standardize then assemble the kernel matrix."""
    scaled, _ = standardize(ds)
    config = KernelConfig(b=float(ds.p) if b is None else float(b), **kwargs)
    return build_kernel_matrix(scaled, config)


@pytest.fixture
def small_ds():
    return make_dataset()


@pytest.fixture
def identical_ds():
    return make_identical_groups()


# Synthetic benchmark files in the Dehejia-Wahba column layout, used to
# exercise the benchmark loaders without network access.
def write_fake_benchmark_cache(cache_dir):
    rng = np.random.default_rng(12345)
    cache_dir.mkdir(parents=True, exist_ok=True)
    for name, rows, treatment in (("nsw_dw", 185, 1), ("psid1", 2490, 0)):
        age = rng.integers(18, 55, size=rows)
        education = rng.integers(3, 17, size=rows)
        black = rng.integers(0, 2, size=rows)
        hispanic = rng.integers(0, 2, size=rows)
        married = rng.integers(0, 2, size=rows)
        re74 = np.round(np.maximum(0.0, rng.normal(3000, 4000, size=rows)), 2)
        re75 = np.round(np.maximum(0.0, rng.normal(3000, 4000, size=rows)), 2)
        re78 = np.round(np.maximum(0.0, rng.normal(5000, 5000, size=rows)), 2)
        nodegree = (education < 12).astype(int)
        with open(cache_dir / f"{name}.txt", "w") as f:
            for i in range(rows):
                f.write(
                    f"{treatment} {age[i]} {education[i]} {black[i]} "
                    f"{hispanic[i]} {married[i]} {nodegree[i]} "
                    f"{re74[i]} {re75[i]} {re78[i]}\n"
                )


@pytest.fixture
def fake_cache(tmp_path):
    cache = tmp_path / "cache"
    write_fake_benchmark_cache(cache)
    return cache
