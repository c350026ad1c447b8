"""Dataset container, CSV ingestion, scaling, and benchmark acquisition.

Covariates are kept as a dense float matrix with named columns. Scaling is
always pooled over the full sample (treated and control together) so that a
single kernel geometry applies to everyone.
"""

from __future__ import annotations

import hashlib
import json
import os
import urllib.request
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from filelock import FileLock

from .errors import BenchmarkFetchError, DataError

_SD_FLOOR = 1e-12


@dataclass(frozen=True)
class Dataset:
    """Covariate matrix X, binary treatment D, and optional outcome Y."""

    X: np.ndarray
    D: np.ndarray
    Y: np.ndarray | None = None
    column_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        D = np.asarray(self.D)
        if X.ndim != 2:
            raise DataError("X must be a 2-d matrix")
        n, p = X.shape
        if n < 2 or p < 1:
            raise DataError(f"need N >= 2 and P >= 1, got N={n}, P={p}")
        if not np.all(np.isfinite(X)):
            raise DataError("X contains missing or non-finite values")
        if D.shape != (n,):
            raise DataError("D must be a vector of length N")
        if not np.isin(D, (0, 1)).all():
            raise DataError("non-binary treatment: D must contain only 0 and 1")
        D = D.astype(int)
        names = list(self.column_names) if self.column_names else [f"x{j}" for j in range(p)]
        if len(names) != p:
            raise DataError("column_names length must match number of covariates")
        Y = self.Y
        if Y is not None:
            Y = np.asarray(Y, dtype=float)
            if Y.shape != (n,):
                raise DataError("Y must be a vector of length N")
            if not np.all(np.isfinite(Y)):
                raise DataError("Y contains missing or non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_treated(self) -> int:
        return int(self.D.sum())

    @property
    def n_control(self) -> int:
        return self.n - self.n_treated

    def require_both_groups(self) -> None:
        """Balancing operations need at least one treated and one control unit."""
        if self.n_treated == 0 or self.n_control == 0:
            raise DataError("need at least one treated and one control unit")

    @property
    def treated_rows(self) -> np.ndarray:
        return np.flatnonzero(self.D == 1)

    @property
    def control_rows(self) -> np.ndarray:
        return np.flatnonzero(self.D == 0)

    def subset(self, rows: np.ndarray) -> "Dataset":
        """Row-subset, keeping column names."""
        return Dataset(
            X=self.X[rows],
            D=self.D[rows],
            Y=None if self.Y is None else self.Y[rows],
            column_names=self.column_names,
        )


@dataclass(frozen=True)
class ScalingInfo:
    """Per-column means/sds used for standardization, plus optional whitening."""

    means: np.ndarray
    sds: np.ndarray
    whitening: np.ndarray | None = None


def load_csv(path, treatment_col: str, outcome_col: str | None = None) -> Dataset:
    """Load a dataset from a comma-separated file with a header row.

    The treatment column must contain only 0/1; every remaining column other
    than the outcome becomes a covariate and must be numeric.
    """
    if not os.path.exists(path):
        raise DataError(f"file not found: {path}")
    with open(path) as f:
        header = f.readline().rstrip("\n").split(",")
    if len(set(header)) != len(header):
        raise DataError("duplicated column names in CSV header")
    df = pd.read_csv(path)
    cols = list(df.columns)
    if treatment_col not in cols:
        raise DataError(f"missing treatment column {treatment_col!r}")
    if outcome_col is not None and outcome_col not in cols:
        raise DataError(f"missing outcome column {outcome_col!r}")
    if df.isna().any().any():
        raise DataError("missing values in CSV")

    d_raw = df[treatment_col].to_numpy()
    if not np.isin(d_raw, (0, 1)).all():
        raise DataError("non-binary treatment")
    covariate_cols = [c for c in cols if c != treatment_col and c != outcome_col]
    for c in covariate_cols:
        if not np.issubdtype(df[c].dtype, np.number):
            raise DataError(f"non-numeric covariate column {c!r}")
    if outcome_col is not None and not np.issubdtype(df[outcome_col].dtype, np.number):
        raise DataError(f"non-numeric outcome column {outcome_col!r}")

    ds = Dataset(
        X=df[covariate_cols].to_numpy(dtype=float),
        D=d_raw.astype(int),
        Y=None if outcome_col is None else df[outcome_col].to_numpy(dtype=float),
        column_names=covariate_cols,
    )
    ds.require_both_groups()
    return ds


def write_csv(ds: Dataset, path, treatment_col: str = "d", outcome_col: str = "y") -> None:
    """Write a dataset back to CSV (inverse of :func:`load_csv`)."""
    df = pd.DataFrame(ds.X, columns=ds.column_names)
    df[treatment_col] = ds.D
    if ds.Y is not None:
        df[outcome_col] = ds.Y
    df.to_csv(path, index=False)


def standardize(ds: Dataset) -> tuple[Dataset, ScalingInfo]:
    """Rescale each covariate to sample mean 0 and sample sd 1 (ddof=1).

    Scaling is pooled over all units; constant columns are rejected.
    """
    means = ds.X.mean(axis=0)
    sds = ds.X.std(axis=0, ddof=1)
    for j, s in enumerate(sds):
        if s <= _SD_FLOOR:
            raise DataError(f"constant covariate column {ds.column_names[j]!r}")
    out = replace(ds, X=(ds.X - means) / sds)
    return out, ScalingInfo(means=means, sds=sds)


def whiten_mahalanobis(ds: Dataset) -> tuple[Dataset, ScalingInfo]:
    """Rotate standardized covariates so their pooled covariance is the identity.

    Euclidean distance on the output equals Mahalanobis distance on the input.
    A small ridge is applied if the covariance is numerically singular.
    """
    cov = np.cov(ds.X, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    evals, evecs = np.linalg.eigh(cov)
    if evals.min() <= _SD_FLOOR:
        cov = cov + 1e-8 * np.eye(cov.shape[0])
        evals, evecs = np.linalg.eigh(cov)
        if evals.min() <= _SD_FLOOR:
            raise DataError("singular covariance: cannot whiten")
    w = evecs @ np.diag(evals ** -0.5) @ evecs.T  # symmetric inverse square root
    out = replace(ds, X=ds.X @ w)
    return out, ScalingInfo(
        means=np.zeros(ds.p), sds=np.ones(ds.p), whitening=w
    )


# ---------------------------------------------------------------------------
# Benchmark data (Dehejia-Wahba NSW treated sample and PSID-1 controls)
# ---------------------------------------------------------------------------

# Raw distribution files are whitespace-delimited without a header.
_RAW_COLUMNS = [
    "treatment", "age", "education", "black", "hispanic", "married",
    "nodegree", "re74", "re75", "re78",
]

STANDARD_COVARIATES = [
    "age", "education", "re74", "re75", "black", "hispanic", "married",
    "u74", "u75", "nodegree",
]
SIMPLE_COVARIATES = ["age", "education", "re74", "re75", "black", "hispanic", "married"]


def _manifest() -> dict:
    here = os.path.dirname(__file__)
    with open(os.path.join(here, "benchmark_manifest.json")) as f:
        return {e["name"]: e for e in json.load(f)}


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _fetch_file(entry: dict, cache_dir: str) -> str:
    """Download one manifest entry into the cache (idempotent via checksum)."""
    os.makedirs(cache_dir, exist_ok=True)
    dest = os.path.join(cache_dir, entry["name"] + ".txt")
    recorded = os.path.join(cache_dir, entry["name"] + ".sha256")
    lock = FileLock(os.path.join(cache_dir, ".kbalance.lock"))
    with lock:
        if os.path.exists(dest):
            digest = _sha256(dest)
            expected = entry.get("sha256")
            if expected is None and os.path.exists(recorded):
                with open(recorded) as f:
                    expected = f.read().strip()
            if expected is not None and digest != expected:
                raise BenchmarkFetchError(
                    f"checksum mismatch for cached {entry['name']}: {digest} != {expected}"
                )
            return dest
        try:
            with urllib.request.urlopen(entry["url"], timeout=60) as resp:
                blob = resp.read()
        except Exception as exc:
            raise BenchmarkFetchError(
                f"could not download {entry['url']} and no cached copy exists: {exc}"
            ) from exc
        digest = hashlib.sha256(blob).hexdigest()
        if entry.get("sha256") is not None and digest != entry["sha256"]:
            raise BenchmarkFetchError(
                f"checksum mismatch for {entry['name']}: {digest} != {entry['sha256']}"
            )
        tmp = dest + ".part"
        with open(tmp, "wb") as f:
            f.write(blob)
        os.replace(tmp, dest)
        with open(recorded, "w") as f:
            f.write(digest + "\n")
    return dest


def fetch_benchmark(name: str, cache_dir: str) -> Dataset:
    """Fetch one benchmark file (``nsw_dw`` treated or ``psid1`` controls).

    Returns a dataset with the standard 10-covariate set (indicators u74/u75
    constructed from zero earnings, nodegree from education < 12) and the
    1978 earnings outcome.
    """
    manifest = _manifest()
    if name not in manifest:
        raise BenchmarkFetchError(f"unknown benchmark {name!r}; known: {sorted(manifest)}")
    path = _fetch_file(manifest[name], cache_dir)
    df = pd.read_csv(path, sep=r"\s+", header=None, names=_RAW_COLUMNS)
    expected_rows = manifest[name].get("rows")
    if expected_rows is not None and len(df) != expected_rows:
        raise BenchmarkFetchError(
            f"{name}: expected {expected_rows} rows, got {len(df)}"
        )
    df = _with_standard_indicators(df)
    return Dataset(
        X=df[STANDARD_COVARIATES].to_numpy(dtype=float),
        D=df["treatment"].to_numpy().astype(int),
        Y=df["re78"].to_numpy(dtype=float),
        column_names=list(STANDARD_COVARIATES),
    )


def _with_standard_indicators(df: pd.DataFrame) -> pd.DataFrame:
    df = df.copy()
    df["u74"] = (df["re74"] == 0).astype(float)
    df["u75"] = (df["re75"] == 0).astype(float)
    df["nodegree"] = (df["education"] < 12).astype(float)
    return df


def load_lalonde(cache_dir: str, covariates: str = "standard") -> Dataset:
    """Merge NSW treated units with PSID-1 controls into one dataset.

    ``covariates`` selects the specification: ``standard`` (10 columns),
    ``simple`` (the 7 untransformed columns), or ``squares`` (standard plus
    squares of age, re74, and re75).
    """
    manifest = _manifest()
    frames = []
    for name in ("nsw_dw", "psid1"):
        path = _fetch_file(manifest[name], cache_dir)
        part = pd.read_csv(path, sep=r"\s+", header=None, names=_RAW_COLUMNS)
        rows = manifest[name].get("rows")
        if rows is not None and len(part) != rows:
            raise BenchmarkFetchError(f"{name}: expected {rows} rows, got {len(part)}")
        frames.append(part)
    df = _with_standard_indicators(pd.concat(frames, ignore_index=True))
    if covariates == "standard":
        names = list(STANDARD_COVARIATES)
    elif covariates == "simple":
        names = list(SIMPLE_COVARIATES)
    elif covariates == "squares":
        names = list(STANDARD_COVARIATES)
        for c in ("age", "re74", "re75"):
            df[c + "_sq"] = df[c] ** 2
            names.append(c + "_sq")
    else:
        raise DataError(f"unknown covariate specification {covariates!r}")
    return Dataset(
        X=df[names].to_numpy(dtype=float),
        D=df["treatment"].to_numpy().astype(int),
        Y=df["re78"].to_numpy(dtype=float),
        column_names=names,
    )
