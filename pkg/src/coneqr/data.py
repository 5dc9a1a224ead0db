"""Core data containers shared across the package."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Dataset:
    """Response vector plus design matrix, ordered in time.

    The first design column is the intercept (all ones) for user-facing
    datasets.  Designs produced by a constraint canonicalization generally
    lose the literal ones column; those are built with ``require_intercept=False``.
    """

    y: np.ndarray
    X: np.ndarray
    require_intercept: bool = field(default=True, compare=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError("y and X row counts differ")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise ValueError("dataset contains non-finite entries")
        if self.n <= self.p:
            raise ValueError(f"need n > p, got n={self.n}, p={self.p}")
        if self.require_intercept and not np.all(X[:, 0] == 1.0):
            raise ValueError("first design column must be the intercept (all ones)")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def drop_columns(self, cols) -> "Dataset":
        """Dataset with the given design columns removed (keeps y)."""
        cols = np.atleast_1d(np.asarray(cols, dtype=int))
        keep = np.setdiff1d(np.arange(self.p), cols)
        if keep.size == 0:
            raise ValueError("cannot drop every design column")
        return Dataset(self.y, self.X[:, keep], require_intercept=False)


@dataclass(frozen=True)
class QuantileSpec:
    """Quantile level of the conditional quantile being modeled."""

    tau: float

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
