"""Projected multiplier bootstrap for cone-constrained quantile regression.

One bootstrap draw convolves centered block sums of the fitted gradient
series with i.i.d. standard normal multipliers, maps the result through the
inverse kernel-sandwich matrix, and projects from the n^{1/4}-inflated
estimate onto the cone.  Confidence intervals come from coordinate-wise
percentiles of the projected draws; test replication produces bootstrap
analogues of the loss-gap and score statistics, using one multiplier vector
per iteration for the full and the restricted model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .data import Dataset, QuantileSpec
from .kernels import SandwichEstimate, ridge_regularize, sandwich_matrix, select_bandwidth_cv
from .projection import metric_project_batch
from .solver import (
    FitResult,
    fit_constrained,
    fit_restricted,
    fit_unconstrained,
    psi,
)
from .stats import TestResult, assemble_test_result, lr_statistic, rb_statistic


@dataclass(frozen=True)
class BootstrapConfig:
    """Replicate count, RNG seed, level, and optional m/h overrides."""

    B: int
    seed: int
    alpha: float = 0.05
    m: int | None = None
    h: float | None = None

    def __post_init__(self):
        if self.B < 100:
            raise ValueError("B < 100")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.m is not None and self.m < 1:
            raise ValueError("block size must be >= 1")
        if self.h is not None and self.h <= 0:
            raise ValueError("bandwidth must be positive")


@dataclass(frozen=True)
class GradientSeries:
    """Rows psi_tau(resid_i) * x_i^{(S)} of the fitted gradient contributions."""

    g: np.ndarray
    tau: float
    S: np.ndarray

    @classmethod
    def from_fit(cls, X: np.ndarray, residuals: np.ndarray, tau: float, S=None) -> "GradientSeries":
        cols = np.arange(X.shape[1]) if S is None else np.asarray(list(S), dtype=int)
        g = psi(residuals, tau)[:, None] * X[:, cols]
        return cls(g=g, tau=tau, S=cols)


@dataclass(frozen=True)
class BootstrapDraw:
    """One replicate: multiplier statistic, its inverse-metric image, projection."""

    Psi: np.ndarray
    Upsilon: np.ndarray
    Lambda: np.ndarray


def _series(gs) -> np.ndarray:
    return gs.g if isinstance(gs, GradientSeries) else np.asarray(gs, dtype=float)


def _cumsum_with_zero(g: np.ndarray) -> np.ndarray:
    cs = np.zeros((g.shape[0] + 1, g.shape[1]))
    np.cumsum(g, axis=0, out=cs[1:])
    return cs


def block_sums(gs, m: int) -> np.ndarray:
    """All n-m+1 rolling sums of m consecutive gradient rows."""
    g = np.atleast_2d(_series(gs))
    n = g.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"block size must lie in [1, {n}], got {m}")
    cs = _cumsum_with_zero(g)
    return cs[m:] - cs[:-m]


def multiplier_psi(blocks: np.ndarray, total: np.ndarray, m: int, n: int, V: np.ndarray) -> np.ndarray:
    """Multiplier statistic (mm*)^{-1/2} sum_i (block_i - (m/n) total) V_i.

    Applied to the restricted-model gradient series this is the restricted
    statistic as well; only the inputs change.
    """
    blocks = np.atleast_2d(blocks)
    m_star = n - m + 1
    V = np.asarray(V, dtype=float)
    if blocks.shape[0] != m_star or V.shape[-1] != m_star:
        raise ValueError("block count, V length, and n - m + 1 disagree")
    centered = blocks - (m / n) * np.asarray(total, dtype=float)
    return (V @ centered) / np.sqrt(m * m_star)


def default_block_grid(n: int) -> np.ndarray:
    """Candidate block sizes k * ceil(n^{1/5}) spanning up to n^{2/3}."""
    base = int(np.ceil(n ** 0.2))
    K = min(20, int(n ** (2.0 / 3.0) / base))
    return base * np.arange(1, K + 1)


def _volatility_stats(cs: np.ndarray, total: np.ndarray, n: int, candidates: np.ndarray) -> np.ndarray:
    vals = np.empty(candidates.shape[0])
    for k, m in enumerate(candidates):
        centered = (cs[m:] - cs[:-m]) - (m / n) * total
        vals[k] = float(np.sum(centered * centered)) / (m * (n - m + 1))
    return vals


def select_block_size(gs, candidates=None) -> int:
    """Minimum-volatility block size.

    For each candidate the normalized squared block-sum statistic is
    computed; the candidate whose 7-point window of neighbors has the
    smallest sample standard deviation wins, ties toward the smaller size.
    """
    g = np.atleast_2d(_series(gs))
    n = g.shape[0]
    candidates = default_block_grid(n) if candidates is None else np.asarray(candidates, dtype=int)
    K = candidates.shape[0]
    if K < 7:
        raise ValueError("need at least 7 candidates")
    if np.any(np.diff(candidates) <= 0) or candidates[0] < 1 or candidates[-1] > n:
        raise ValueError("candidates must be ascending within [1, n]")
    cs = _cumsum_with_zero(g)
    total = cs[-1] - cs[0]
    vals = _volatility_stats(cs, total, n, candidates)
    return int(candidates[min_volatility_index(vals)])


def min_volatility_index(vals) -> int:
    """Index whose 7-point window of values has the smallest sample stdev.

    Only indices with a full window qualify; ties go to the earlier (smaller)
    candidate.
    """
    vals = np.asarray(vals, dtype=float)
    K = vals.shape[0]
    if K < 7:
        raise ValueError("need at least 7 candidates")
    best_k, best_sd = None, np.inf
    for k in range(3, K - 3):
        sd = float(np.std(vals[k - 3:k + 4], ddof=1))
        if sd < best_sd:
            best_k, best_sd = k, sd
    return best_k


def g1(x: np.ndarray, y: np.ndarray, z: np.ndarray) -> float:
    """Quadratic-minus-linear form 0.5 x'yx - z'x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    if y.shape != (x.shape[0], x.shape[0]) or z.shape != x.shape:
        raise ValueError("g1 dimensions disagree")
    return float(0.5 * x @ y @ x - z @ x)


def g2(x: np.ndarray, y: np.ndarray, z: np.ndarray) -> float:
    """Quadratic form (x - y)' z^{-1} (x - y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if x.shape != y.shape or z.shape != (x.shape[0], x.shape[0]):
        raise ValueError("g2 dimensions disagree")
    diff = x - y
    try:
        sol = np.linalg.solve(z, diff)
    except np.linalg.LinAlgError:
        raise ValueError("singular normalization matrix in g2") from None
    return float(diff @ sol)


def normal_multipliers(seed, B: int, m_star: int) -> np.ndarray:
    """B independent multiplier vectors from per-replicate substreams of seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(B)
    V = np.empty((B, m_star))
    for b, child in enumerate(children):
        V[b] = np.random.default_rng(child).standard_normal(m_star)
    return V


@dataclass
class PreparedModel:
    """Fit plus everything draw generation needs: gradient cumsums and metric."""

    fit: FitResult
    X: np.ndarray
    cs: np.ndarray
    total: np.ndarray
    Xi: np.ndarray
    Xi_cho: tuple
    q: int
    n: int


def prepare_model(X: np.ndarray, fit: FitResult, h: float) -> PreparedModel:
    g = psi(fit.residuals, fit.tau)[:, None] * X
    cs = _cumsum_with_zero(g)
    Xi = ridge_regularize(sandwich_matrix(fit.residuals, X, X, h), "projection metric estimate")
    return PreparedModel(
        fit=fit, X=X, cs=cs, total=cs[-1] - cs[0], Xi=Xi,
        Xi_cho=cho_factor(Xi, lower=True), q=fit.q, n=X.shape[0],
    )


def lambda_draws(pm: PreparedModel, m: int, V: np.ndarray):
    """Batched draws (Psi, Upsilon, Lambda) for the multiplier matrix V."""
    n = pm.n
    m_star = n - m + 1
    blocks = pm.cs[m:] - pm.cs[:-m]
    Psi = multiplier_psi(blocks, pm.total, m, n, V)
    Ups = cho_solve(pm.Xi_cho, Psi.T).T
    base = n ** 0.25 * pm.fit.beta
    Lam = metric_project_batch(base[None, :] + Ups, pm.Xi, pm.q) - base
    return Psi, Ups, Lam


def draw_lambda(beta_hat: np.ndarray, Xi, Psi: np.ndarray, n: int, q: int) -> BootstrapDraw:
    """Single projected draw from a multiplier statistic.

    The restricted-model analogue is the same computation with the
    restricted metric, coefficients, and multiplier statistic.
    """
    beta_hat = np.asarray(beta_hat, dtype=float)
    if q and np.min(beta_hat[:q], initial=np.inf) < -1e-9:
        raise ValueError("beta_hat must lie in the cone Q")
    M = Xi.M_hat if isinstance(Xi, SandwichEstimate) else np.asarray(Xi, dtype=float)
    M = ridge_regularize(M, "projection metric estimate")
    Ups = cho_solve(cho_factor(M, lower=True), np.asarray(Psi, dtype=float))
    base = n ** 0.25 * beta_hat
    Lam = metric_project_batch((base + Ups)[None, :], M, q)[0] - base
    return BootstrapDraw(Psi=np.asarray(Psi, dtype=float), Upsilon=Ups, Lambda=Lam)


@dataclass(frozen=True)
class CIResult:
    """Percentile bootstrap intervals plus the raw projected draws."""

    lower: np.ndarray
    upper: np.ndarray
    beta: np.ndarray
    draws: np.ndarray
    m: int
    h: float
    alpha: float
    B: int
    seed: int
    n: int

    def contains(self, j: int, value: float) -> bool:
        return bool(self.lower[j] <= value <= self.upper[j])


def percentile_interval(beta: np.ndarray, draws: np.ndarray, n: int, alpha: float,
                        q: int = 0, clip: bool = False):
    """Coordinate-wise interval (beta - q_{1-a/2}/sqrt(n), beta - q_{a/2}/sqrt(n))."""
    qlo = np.quantile(draws, alpha / 2.0, axis=0)
    qhi = np.quantile(draws, 1.0 - alpha / 2.0, axis=0)
    sn = np.sqrt(n)
    lower = beta - qhi / sn
    upper = beta - qlo / sn
    if clip and q:
        lower[:q] = np.maximum(lower[:q], 0.0)
    return lower, upper


def bootstrap_ci(data: Dataset, spec: QuantileSpec, q: int, cfg: BootstrapConfig,
                 clip: bool = False) -> CIResult:
    """Percentile confidence intervals from projected multiplier draws.

    Unset block size / bandwidth are selected by minimum volatility and
    blocked cross-validation from the fitted residuals.
    """
    fit = fit_constrained(data, spec, q) if q else fit_unconstrained(data, spec)
    h = cfg.h if cfg.h is not None else select_bandwidth_cv(fit.residuals)
    pm = prepare_model(data.X, fit, h)
    m = cfg.m if cfg.m is not None else select_block_size(
        GradientSeries.from_fit(data.X, fit.residuals, spec.tau))
    V = normal_multipliers(cfg.seed, cfg.B, data.n - m + 1)
    _, _, Lam = lambda_draws(pm, m, V)
    lower, upper = percentile_interval(fit.beta, Lam, data.n, cfg.alpha, q=q, clip=clip)
    return CIResult(lower=lower, upper=upper, beta=fit.beta, draws=Lam,
                    m=m, h=h, alpha=cfg.alpha, B=cfg.B, seed=cfg.seed, n=data.n)


def _g1_batch(Lam: np.ndarray, Xi: np.ndarray, Psi: np.ndarray) -> np.ndarray:
    quad = np.einsum("bi,ij,bj->b", Lam, Xi, Lam)
    lin = np.einsum("bi,bi->b", Psi, Lam)
    return 0.5 * quad - lin


def run_tests(data: Dataset, spec: QuantileSpec, A, q: int, cfg: BootstrapConfig,
              kinds=("LR", "RB")) -> dict[str, TestResult]:
    """Observed statistics and bootstrap p-values for the requested test kinds.

    Full and restricted models share the block size, the bandwidth, and the
    multiplier vector within each replicate.
    """
    A = np.unique(np.asarray(list(A), dtype=int))
    if A.size == 0:
        raise ValueError("tested index set is empty")
    full = fit_constrained(data, spec, q) if q else fit_unconstrained(data, spec)
    restr = fit_restricted(data, spec, A, q)
    keep = np.setdiff1d(np.arange(data.p), A)

    h = cfg.h if cfg.h is not None else select_bandwidth_cv(full.residuals)
    pm_full = prepare_model(data.X, full, h)
    pm_restr = prepare_model(data.X[:, keep], restr, h)
    m = cfg.m if cfg.m is not None else select_block_size(
        GradientSeries.from_fit(data.X, full.residuals, spec.tau))
    V = normal_multipliers(cfg.seed, cfg.B, data.n - m + 1)

    Psi, _, Lam = lambda_draws(pm_full, m, V)
    Psi0, _, Lam0 = lambda_draws(pm_restr, m, V)

    out: dict[str, TestResult] = {}
    if "LR" in kinds:
        T_lr = lr_statistic(restr, full)
        reps = _g1_batch(Lam0, pm_restr.Xi, Psi0) - _g1_batch(Lam, pm_full.Xi, Psi)
        out["LR"] = assemble_test_result("LR", T_lr, reps, A, spec.tau, m, h, cfg.seed)
    if "RB" in kinds:
        T_rb = rb_statistic(data, spec, full, restr, A)
        XA = data.X[:, A]
        Xi_rb = sandwich_matrix(full.residuals, XA, data.X, h)
        Xi_rb0 = sandwich_matrix(restr.residuals, XA, data.X[:, keep], h)
        D_over_n = ridge_regularize(XA.T @ XA / data.n, "tested-column Gram matrix")
        U = Lam @ Xi_rb.T - Lam0 @ Xi_rb0.T
        sols = cho_solve(cho_factor(D_over_n, lower=True), U.T).T
        reps = np.einsum("bi,bi->b", U, sols)
        out["RB"] = assemble_test_result("RB", T_rb, reps, A, spec.tau, m, h, cfg.seed)
    return out


def bootstrap_test(data: Dataset, spec: QuantileSpec, A, q: int, cfg: BootstrapConfig,
                   kind: str = "LR") -> TestResult:
    """Bootstrap test of H0: beta_A = 0 within the cone, kind "LR" or "RB"."""
    if kind not in ("LR", "RB"):
        raise ValueError('kind must be "LR" or "RB"')
    return run_tests(data, spec, A, q, cfg, kinds=(kind,))[kind]
