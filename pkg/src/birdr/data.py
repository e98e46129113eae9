"""Dataset container, CSV ingestion, whitening, and synthetic data generators."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import (
    ColumnNotFound,
    DegenerateData,
    InvalidSpec,
    NonNumericColumn,
    ShapeMismatch,
    TooFewRows,
)


@dataclass(frozen=True)
class Dataset:
    """Predictor matrix (n x p) with a scalar response per row."""

    X: np.ndarray
    y: np.ndarray
    column_names: list[str] | None = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        n, p = X.shape
        if n < 2 or p < 1:
            raise TooFewRows(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if X.shape[0] != y.shape[0]:
            raise ShapeMismatch(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} entries"
            )
        if not np.all(np.isfinite(X)):
            raise ShapeMismatch("X contains non-finite values")
        if not np.all(np.isfinite(y)):
            raise ShapeMismatch("y contains non-finite values")
        if self.column_names is not None and len(self.column_names) != p:
            raise ShapeMismatch("column_names length does not match p")
        X.setflags(write=False)
        y.setflags(write=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def load_csv(path, response_column, drop_rows_with_missing=False) -> Dataset:
    """Read a one-header CSV into a Dataset.

    `response_column` may be a column name or a zero-based index.  All
    remaining columns become predictors, in file order.  Non-numeric
    predictor columns are rejected with a diagnostic naming them.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TooFewRows(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(cell.strip() for cell in r)]

    header = [h.strip() for h in header]
    if isinstance(response_column, int):
        if not 0 <= response_column < len(header):
            raise ColumnNotFound(
                f"response index {response_column} out of range for {len(header)} columns"
            )
        resp_idx = response_column
    else:
        try:
            resp_idx = header.index(response_column)
        except ValueError:
            raise ColumnNotFound(
                f"response column {response_column!r} not in {header}"
            ) from None

    def parse(cell):
        cell = cell.strip()
        if cell == "" or cell.upper() in ("NA", "NAN", "?"):
            return None
        try:
            return float(cell)
        except ValueError:
            return cell  # kept as str to flag non-numeric columns

    parsed = [[parse(c) for c in row] for row in rows]
    bad_cols = sorted(
        {
            header[j]
            for row in parsed
            for j, v in enumerate(row)
            if isinstance(v, str) and j != resp_idx
        }
    )
    if bad_cols:
        raise NonNumericColumn(bad_cols)

    kept = []
    for row in parsed:
        if len(row) != len(header):
            continue
        if any(v is None for v in row) or isinstance(row[resp_idx], str):
            if drop_rows_with_missing:
                continue
            raise NonNumericColumn([header[resp_idx]]) if isinstance(
                row[resp_idx], str
            ) else TooFewRows(f"{path}: missing value in row {row}")
        kept.append(row)
    if len(kept) < 2:
        raise TooFewRows(f"{path}: fewer than 2 complete rows")

    arr = np.array(kept, dtype=float)
    pred_idx = [j for j in range(len(header)) if j != resp_idx]
    return Dataset(
        X=arr[:, pred_idx],
        y=arr[:, resp_idx],
        column_names=[header[j] for j in pred_idx],
    )


@dataclass(frozen=True)
class Whitener:
    """Affine transform sending fitting data to mean 0, covariance I.

    `transform` is the symmetric inverse square root of the sample
    covariance (eigenvalues clamped at `eigen_floor` from below) and
    `inverse_transform` its inverse.
    """

    mean: np.ndarray
    transform: np.ndarray
    inverse_transform: np.ndarray
    eigen_floor: float
    n_clamped: int = 0

    def __post_init__(self):
        for name in ("mean", "transform", "inverse_transform"):
            a = np.asarray(getattr(self, name), dtype=float)
            a.setflags(write=False)
            object.__setattr__(self, name, a)


def fit_whitener(X, eigen_floor: float | None = None) -> Whitener:
    """Fit a symmetric whitening transform to the rows of X.

    The default eigenvalue floor is 1e-10 times the largest covariance
    eigenvalue; it guards the inverse square root on near-rank-deficient
    small samples.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, p = X.shape
    if n < 2:
        raise TooFewRows("whitening needs at least 2 rows")
    mean = X.mean(axis=0)
    R = X - mean
    if not np.any(R):
        raise DegenerateData("all rows identical")
    cov = (R.T @ R) / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    if eigen_floor is None:
        eigen_floor = 1e-10 * float(evals[-1])
    eigen_floor = float(max(eigen_floor, np.finfo(float).tiny))
    n_clamped = int(np.sum(evals < eigen_floor))
    clamped = np.maximum(evals, eigen_floor)
    transform = (evecs / np.sqrt(clamped)) @ evecs.T
    inverse = (evecs * np.sqrt(clamped)) @ evecs.T
    return Whitener(
        mean=mean,
        transform=0.5 * (transform + transform.T),
        inverse_transform=0.5 * (inverse + inverse.T),
        eigen_floor=eigen_floor,
        n_clamped=n_clamped,
    )


def whiten(whitener: Whitener, X) -> np.ndarray:
    """Map each row x to W (x - mean)."""
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != whitener.mean.shape[0]:
        raise ShapeMismatch(
            f"expected {whitener.mean.shape[0]} columns, got {X.shape[-1]}"
        )
    return (X - whitener.mean) @ whitener.transform


def unwhiten_direction(whitener: Whitener, eta) -> np.ndarray:
    """Back-transform a direction from whitened to original coordinates.

    Returns the unit vector b proportional to W @ eta, so that b . x
    is a positive multiple of eta . W(x - mean) plus a constant.
    """
    eta = np.asarray(eta, dtype=float).ravel()
    if eta.shape[0] != whitener.mean.shape[0]:
        raise ShapeMismatch(
            f"expected direction of length {whitener.mean.shape[0]}, got {eta.shape[0]}"
        )
    b = whitener.transform @ eta
    norm = np.linalg.norm(b)
    if norm == 0.0:
        raise DegenerateData("direction maps to zero under the whitener")
    return b / norm


class FunctionId(str, Enum):
    FUN1 = "fun1"
    FUN2 = "fun2"
    FUN3_BANANA = "fun3_banana"
    FUN4_BANANA = "fun4_banana"
    QUAD = "quad"


# Noise coefficient on the standard-normal epsilon, per generator.
_DEFAULT_NOISE = {
    FunctionId.FUN1: 0.5,
    FunctionId.FUN2: 0.1,
    FunctionId.FUN3_BANANA: 0.5,
    FunctionId.FUN4_BANANA: 0.1,
    FunctionId.QUAD: 0.1,
}

_MIN_DIM = {
    FunctionId.FUN1: 5,
    FunctionId.FUN2: 5,
    FunctionId.FUN3_BANANA: 2,
    FunctionId.FUN4_BANANA: 2,
    FunctionId.QUAD: 1,
}


@dataclass(frozen=True)
class SyntheticSpec:
    """Configuration of one synthetic test function."""

    function_id: FunctionId
    dimension: int
    banana_b: float = 0.0
    noise_sd: float | None = None
    banana_literal: bool = False  # keep the curving transform exactly as printed

    def __post_init__(self):
        fid = FunctionId(self.function_id)
        object.__setattr__(self, "function_id", fid)
        if self.dimension < _MIN_DIM[fid]:
            raise InvalidSpec(
                f"{fid.value} requires dimension >= {_MIN_DIM[fid]}, got {self.dimension}"
            )
        if self.banana_b < 0:
            raise InvalidSpec("banana_b must be nonnegative")
        if self.noise_sd is None:
            object.__setattr__(self, "noise_sd", _DEFAULT_NOISE[fid])
        if self.noise_sd < 0:
            raise InvalidSpec("noise_sd must be nonnegative")

    @property
    def n_directions(self) -> int:
        return 1 if self.function_id is FunctionId.QUAD else 2

    def true_directions(self) -> np.ndarray:
        """Orthonormal basis of the ground-truth DR subspace, p x K."""
        d = self.dimension
        B = np.zeros((d, self.n_directions))
        fid = self.function_id
        if fid is FunctionId.FUN1:
            B[0, 0] = 1.0
            B[1, 1] = B[2, 1] = 1.0 / np.sqrt(2.0)
        elif fid is FunctionId.FUN2:
            B[0:3, 0] = 1.0 / np.sqrt(3.0)
            B[3:5, 1] = 1.0 / np.sqrt(2.0)
        elif fid in (FunctionId.FUN3_BANANA, FunctionId.FUN4_BANANA):
            B[0, 0] = 1.0
            B[1, 1] = 1.0
        else:  # QUAD
            B[0, 0] = 1.0
        return B


def gen_synthetic(spec: SyntheticSpec, n: int, seed: int) -> tuple[Dataset, np.ndarray]:
    """Generate a seeded synthetic dataset; returns (dataset, true directions)."""
    if n < 1:
        raise InvalidSpec("n must be >= 1")
    rng = np.random.default_rng(seed)
    d = spec.dimension
    fid = spec.function_id

    if fid in (FunctionId.FUN3_BANANA, FunctionId.FUN4_BANANA):
        u = rng.standard_normal((n, 2))
        X = np.empty((n, d))
        X[:, 0] = u[:, 0]
        if spec.banana_literal:
            X[:, 1] = u[:, 0] - spec.banana_b * u[:, 0] ** 2
        else:
            X[:, 1] = u[:, 1] - spec.banana_b * u[:, 0] ** 2
        if d > 2:
            X[:, 2:] = rng.standard_normal((n, d - 2))
        eps = rng.standard_normal(n)
        if fid is FunctionId.FUN3_BANANA:
            y = u[:, 0] / (0.5 + (u[:, 1] + 1.5) ** 2) + spec.noise_sd * eps
        else:
            y = np.sin(5.0 * np.pi * u[:, 0]) + u[:, 1] ** 2 + spec.noise_sd * eps
    else:
        X = rng.standard_normal((n, d))
        eps = rng.standard_normal(n)
        if fid is FunctionId.FUN1:
            y = X[:, 0] * (X[:, 1] + X[:, 2]) + spec.noise_sd * eps
        elif fid is FunctionId.FUN2:
            y = (X[:, 0] + X[:, 1] + X[:, 2]) / (
                0.5 + (X[:, 3] + X[:, 4]) ** 2
            ) + spec.noise_sd * eps
        else:  # QUAD
            y = X[:, 0] ** 2 + spec.noise_sd * eps

    return Dataset(X=X, y=y), spec.true_directions()


def synthetic_response(spec: SyntheticSpec, X, eps=None) -> np.ndarray:
    """Evaluate the response formula on given predictors (noise optional).

    Only valid for generators where y is a function of x (FUN1, FUN2,
    QUAD); the banana variants generate y from latent coordinates.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    fid = spec.function_id
    noise = 0.0 if eps is None else spec.noise_sd * np.asarray(eps, dtype=float)
    if fid is FunctionId.FUN1:
        return X[:, 0] * (X[:, 1] + X[:, 2]) + noise
    if fid is FunctionId.FUN2:
        return (X[:, 0] + X[:, 1] + X[:, 2]) / (0.5 + (X[:, 3] + X[:, 4]) ** 2) + noise
    if fid is FunctionId.QUAD:
        return X[:, 0] ** 2 + noise
    raise InvalidSpec(f"{fid.value} has no deterministic response in x")
