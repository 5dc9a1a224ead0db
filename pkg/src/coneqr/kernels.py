"""Kernel-weighted sandwich estimators and cross-validated bandwidths.

The sandwich estimator (nh)^{-1} sum_i phi(e_i/h) xL_i xR_i' estimates the
density-weighted design matrix that acts as the projection metric; its
restricted and rectangular variants share the same kernel sum with different
column sets and residual vectors.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor

from .data import Dataset

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def gaussian_kernel(u):
    """Standard normal density."""
    u = np.asarray(u, dtype=float)
    out = np.exp(-0.5 * u * u) / _SQRT_2PI
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class SandwichEstimate:
    """Kernel sandwich matrix with the bandwidth and sample size that built it."""

    M_hat: np.ndarray
    h: float
    n: int

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("bandwidth must be positive")
        if not np.all(np.isfinite(self.M_hat)):
            raise ValueError("sandwich estimate has non-finite entries")


def sandwich_matrix(residuals: np.ndarray, XL: np.ndarray, XR: np.ndarray, h: float) -> np.ndarray:
    """Core kernel sum (nh)^{-1} sum_i phi(e_i/h) XL_i XR_i'."""
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    residuals = np.asarray(residuals, dtype=float)
    n = residuals.shape[0]
    if XL.shape[0] != n or XR.shape[0] != n:
        raise ValueError("residuals and design row counts differ")
    w = gaussian_kernel(residuals / h) / (n * h)
    return (XL * w[:, None]).T @ XR


def powell_sandwich(data: Dataset, residuals: np.ndarray, L, R, h: float) -> SandwichEstimate:
    """Sandwich estimate over column sets L and R of the dataset's design.

    L or R given as None selects every column.  With L = R and full-model
    residuals this is the projection-metric estimate; restricted residuals
    with L = R = A^c give its restricted-model analogue, and mixed L/R give
    the rectangular variants used by the rank-based test.
    """
    XL = data.X if L is None else data.X[:, np.asarray(list(L), dtype=int)]
    XR = data.X if R is None else data.X[:, np.asarray(list(R), dtype=int)]
    return SandwichEstimate(M_hat=sandwich_matrix(residuals, XL, XR, h), h=h, n=data.n)


def ridge_regularize(M: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Symmetrize and, if near-singular, ridge a square PSD estimate.

    A ridge of 1e-8 * (trace/p) is added when the smallest eigenvalue falls
    below 1e-10 * (trace/p); failure beyond that is an error.
    """
    M = (np.asarray(M, dtype=float) + np.asarray(M, dtype=float).T) / 2.0
    p = M.shape[0]
    mean_eig = float(np.trace(M)) / p
    lam_min = float(np.linalg.eigvalsh(M)[0])
    if lam_min < 1e-10 * mean_eig:
        if mean_eig <= 0:
            raise ValueError(f"{what} is singular and cannot be regularized")
        warnings.warn(f"{what} nearly singular; adding ridge", RuntimeWarning, stacklevel=2)
        M = M + (1e-8 * mean_eig) * np.eye(p)
    try:
        cho_factor(M, lower=True)
    except LinAlgError:
        raise ValueError(f"{what} is singular beyond regularization") from None
    return M


def default_bandwidth_grid(residuals: np.ndarray, size: int = 15) -> np.ndarray:
    """Geometric grid spanning [0.25, 4] times the normal-reference bandwidth."""
    residuals = np.asarray(residuals, dtype=float)
    n = residuals.shape[0]
    sd = float(np.std(residuals, ddof=1))
    if sd <= 0:
        raise ValueError("zero-variance residuals")
    href = 1.06 * sd * n ** (-0.2)
    return href * np.geomspace(0.25, 4.0, size)


def select_bandwidth_cv(residuals: np.ndarray, folds: int = 5, grid=None) -> float:
    """Bandwidth maximizing blocked K-fold held-out Gaussian-KDE log-likelihood.

    Folds are contiguous blocks (serial dependence is the norm here, so
    random folds would leak).  Ties go to the smaller bandwidth.
    """
    residuals = np.asarray(residuals, dtype=float)
    n = residuals.shape[0]
    if np.ptp(residuals) == 0.0:
        raise ValueError("zero-variance residuals")
    if n < 2 * folds:
        raise ValueError("need at least 2 observations per fold")
    grid = default_bandwidth_grid(residuals) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0):
        raise ValueError("bandwidth grid must be nonempty and positive")

    bounds = np.linspace(0, n, folds + 1).astype(int)
    d2 = (residuals[:, None] - residuals[None, :]) ** 2

    best_h, best_score = None, -np.inf
    for h in np.sort(grid):
        K = np.exp(d2 / (-2.0 * h * h))
        row_tot = K.sum(axis=1)
        score = 0.0
        for k in range(folds):
            a, b = bounds[k], bounds[k + 1]
            inside = K[a:b, a:b].sum(axis=1)
            dens = (row_tot[a:b] - inside) / ((n - (b - a)) * h * _SQRT_2PI)
            score += float(np.sum(np.log(np.maximum(dens, 1e-300))))
        if score > best_score:
            best_h, best_score = float(h), score
    return best_h
