"""Synthetic benchmark models, CSV ingestion and seeded splitting."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, InvalidTargetError
from .losses import Task

RHO = 0.5  # AR(1) coefficient giving Cov(X_i, X_j) = 2 ** -|i - j|


class Model(str, enum.Enum):
    REGRESSION = "regression"
    CLASSIFICATION = "classification"
    SINE = "sine"


class Design(str, enum.Enum):
    CORRELATED = "correlated"
    UNCORRELATED = "uncorrelated"


_DEFAULTS = {Model.REGRESSION: (800, 100), Model.CLASSIFICATION: (1500, 50), Model.SINE: (500, 1)}
_MIN_DIM = {Model.REGRESSION: 4, Model.CLASSIFICATION: 18, Model.SINE: 1}


@dataclass(frozen=True)
class DatasetSplit:
    features: np.ndarray
    targets: np.ndarray
    task: Task = Task.REGRESSION

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        y = np.asarray(self.targets, dtype=float)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
            raise DataError(f"features {X.shape} and targets {y.shape} do not align")
        if np.isnan(X).any() or np.isnan(y).any():
            raise DataError("dataset contains NaN")
        if self.task is Task.CLASSIFICATION and not np.all(np.abs(y) == 1.0):
            raise InvalidTargetError("classification targets must be -1 or +1")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)

    @property
    def n(self) -> int:
        return self.targets.size

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "DatasetSplit":
        return DatasetSplit(self.features[rows], self.targets[rows], self.task)

    @staticmethod
    def concat(*parts: "DatasetSplit") -> "DatasetSplit":
        return DatasetSplit(np.vstack([p.features for p in parts]),
                            np.concatenate([p.targets for p in parts]), parts[0].task)


@dataclass(frozen=True)
class SynthSpec:
    """Synthetic model description; ``n``/``d`` default to the model's usual size.

    ``noise`` is the noise *variance* for the regression and classification
    models and the noise *standard deviation* for the sine toy model.
    """

    model: Model = Model.REGRESSION
    design: Design = Design.CORRELATED
    n: int | None = None
    d: int | None = None
    seed: int = 0
    noise: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        object.__setattr__(self, "design", Design(self.design))
        n0, d0 = _DEFAULTS[self.model]
        if self.n is None:
            object.__setattr__(self, "n", n0)
        if self.d is None:
            object.__setattr__(self, "d", d0)
        if self.n < 1:
            raise DataError("n must be positive")
        if self.d < _MIN_DIM[self.model]:
            raise DataError(f"{self.model.value} model needs d >= {_MIN_DIM[self.model]}, got {self.d}")


def correlated_design(n: int, d: int, rng: np.random.Generator, rho: float = RHO) -> np.ndarray:
    """Gaussian rows with covariance ``rho ** |i - j|`` via an exact AR(1) recursion."""
    X = np.empty((n, d))
    X[:, 0] = rng.standard_normal(n)
    scale = math.sqrt(1.0 - rho * rho)
    for j in range(1, d):
        X[:, j] = rho * X[:, j - 1] + scale * rng.standard_normal(n)
    return X


def generate(spec: SynthSpec) -> DatasetSplit:
    """Draw a dataset from one of the benchmark models."""
    rng = np.random.default_rng(spec.seed)
    n, d = spec.n, spec.d
    if spec.model is Model.SINE:
        x = rng.uniform(0.0, 1.0, size=n)
        sd = 0.3 if spec.noise is None else spec.noise
        y = np.sin(2 * np.pi * x) + sd * rng.standard_normal(n)
        X = x[:, None] if d == 1 else np.column_stack([x, rng.uniform(0, 1, size=(n, d - 1))])
        return DatasetSplit(X, y, Task.REGRESSION)

    if spec.design is Design.CORRELATED:
        X = correlated_design(n, d, rng)
    else:
        X = rng.uniform(-1.0, 1.0, size=(n, d))
    x = X.T  # x[0] is the first covariate
    if spec.model is Model.REGRESSION:
        var = 0.5 if spec.noise is None else spec.noise
        z = math.sqrt(var) * rng.standard_normal(n)
        y = -np.sin(2 * x[0]) + x[1] ** 2 + x[2] - np.exp(-x[3]) + z
        return DatasetSplit(X, y, Task.REGRESSION)
    var = 0.1 if spec.noise is None else spec.noise
    z = math.sqrt(var) * rng.standard_normal(n)
    score = x[0] + x[3] ** 3 + x[8] + np.sin(x[11] * x[17]) + z
    y = np.where(score > 0.38, 1.0, -1.0)
    return DatasetSplit(X, y, Task.CLASSIFICATION)


def load_csv(path, target_column: str = "y", task: Task | str = Task.REGRESSION) -> DatasetSplit:
    """Read a numeric CSV with a header row; every other column is a feature."""
    task = Task(task)
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if target_column not in header:
            raise DataError(f"{path}: target column {target_column!r} not in header {header}")
        t = header.index(target_column)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
            vals = []
            for col, cell in zip(header, row):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}:{lineno}: column {col!r}: non-numeric cell {cell!r}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}:{lineno}: column {col!r}: non-finite cell {cell!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    A = np.array(rows)
    y = A[:, t]
    X = np.delete(A, t, axis=1)
    if X.shape[1] == 0:
        raise DataError(f"{path}: no feature columns")
    if task is Task.CLASSIFICATION and not np.all(np.abs(y) == 1.0):
        bad = y[np.abs(y) != 1.0][0]
        raise InvalidTargetError(f"{path}: classification target must be -1 or +1, found {float(bad)!r}")
    return DatasetSplit(X, y, task)


def write_csv(ds: DatasetSplit, path, target_column: str = "y") -> None:
    """Write features as ``x1..xd`` plus the target column, shortest round-trip floats."""
    path = Path(path)
    header = [f"x{j + 1}" for j in range(ds.d)] + [target_column]
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row, y in zip(ds.features, ds.targets):
            w.writerow([repr(float(v)) for v in row] + [repr(float(y))])


def split(ds: DatasetSplit, fractions=(0.5, 0.25, 0.25), seed: int = 0):
    """Seeded shuffle, then contiguous train/validation/test cuts.

    Train and validation sizes are ``floor(n * f)``; test takes the rest.
    """
    fr = tuple(float(f) for f in fractions)
    if len(fr) == 2:
        fr = fr + (max(0.0, 1.0 - sum(fr)),)
    if len(fr) != 3 or any(f < 0 for f in fr) or sum(fr) > 1 + 1e-9:
        raise ValueError(f"fractions must be three non-negative numbers summing to <= 1, got {fractions}")
    n = ds.n
    perm = np.random.default_rng(seed).permutation(n)
    n_train = math.floor(n * fr[0] + 1e-9)
    n_val = math.floor(n * fr[1] + 1e-9)
    a, b = perm[:n_train], perm[n_train:n_train + n_val]
    c = perm[n_train + n_val:]
    return ds.subset(a), ds.subset(b), ds.subset(c)
