"""Observed test statistics for coefficient exclusion under the cone constraints."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .data import Dataset, QuantileSpec
from .kernels import ridge_regularize
from .solver import FitResult, psi


@dataclass(frozen=True)
class TestResult:
    """Observed statistic, its bootstrap replicates, and the p-value.

    ``p_value`` is the share of replicates at or above the observed
    statistic (reject for small values); ``frac_below`` is the complementary
    strict count of replicates under the statistic.
    """

    kind: str
    statistic: float
    replicates: np.ndarray
    p_value: float
    frac_below: float
    A: np.ndarray
    tau: float
    m: int
    h: float
    B: int
    seed: int = field(default=0)

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError("p-value outside [0, 1]")


def assemble_test_result(kind: str, statistic: float, replicates: np.ndarray,
                         A, tau: float, m: int, h: float, seed: int = 0) -> TestResult:
    replicates = np.asarray(replicates, dtype=float)
    frac_below = float(np.mean(statistic > replicates))
    return TestResult(
        kind=kind,
        statistic=float(statistic),
        replicates=replicates,
        p_value=float(np.mean(replicates >= statistic)),
        frac_below=frac_below,
        A=np.asarray(list(A), dtype=int),
        tau=tau,
        m=int(m),
        h=float(h),
        B=replicates.shape[0],
        seed=seed,
    )


def _validate_pair(fit_restricted: FitResult, fit_full: FitResult):
    if fit_restricted.n != fit_full.n:
        raise ValueError("fits come from datasets of different length")
    if fit_restricted.tau != fit_full.tau:
        raise ValueError("fits use different quantile levels")
    if fit_restricted.beta.shape[0] > fit_full.beta.shape[0]:
        raise ValueError("restricted model is larger than the full model")


def lr_statistic(fit_restricted: FitResult, fit_full: FitResult) -> float:
    """Check-loss gap between the restricted and the full constrained fit."""
    _validate_pair(fit_restricted, fit_full)
    return fit_restricted.loss - fit_full.loss


def rb_statistic(data: Dataset, spec: QuantileSpec, fit_full: FitResult,
                 fit_restricted: FitResult, A) -> float:
    """Score-type statistic contrasting full and restricted gradient sums.

    S1 and S0 sum psi_tau-weighted tested columns under the full and the
    restricted residuals; the statistic is the quadratic form of S1 - S0 in
    the inverse Gram matrix of the tested columns.
    """
    _validate_pair(fit_restricted, fit_full)
    A = np.asarray(list(A), dtype=int)
    XA = data.X[:, A]
    if np.linalg.matrix_rank(XA) < A.size:
        raise ValueError("tested covariates collinear")
    S1 = XA.T @ psi(fit_full.residuals, spec.tau)
    S0 = XA.T @ psi(fit_restricted.residuals, spec.tau)
    Dn = ridge_regularize(XA.T @ XA, "tested-column Gram matrix")
    diff = S1 - S0
    return float(diff @ cho_solve(cho_factor(Dn, lower=True), diff))
