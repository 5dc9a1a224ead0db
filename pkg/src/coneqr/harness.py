"""Monte Carlo experiment driver: type-I error, CI coverage, and power curves.

Replications are independent tasks with RNG substreams derived from the plan
seed, so results are identical whether they run serially or on a worker
pool; aggregation only counts per-replicate outcomes.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .bootstrap import (
    BootstrapConfig,
    GradientSeries,
    _g1_batch,
    default_block_grid,
    lambda_draws,
    normal_multipliers,
    percentile_interval,
    prepare_model,
    run_tests,
    select_block_size,
)
from .data import QuantileSpec
from .kernels import ridge_regularize, sandwich_matrix, select_bandwidth_cv
from .solver import fit_constrained, fit_restricted, fit_unconstrained
from .stats import lr_statistic, rb_statistic
from scipy.linalg import cho_factor, cho_solve

from .simulate import SimSetting, gen_setting

_X_COL = 1  # tested coefficient: the slope on x
_Q_CONSTRAINED = 2  # both intercept and slope restricted to be nonnegative


@dataclass(frozen=True)
class ExperimentPlan:
    """What to simulate: cells, replication budget, and the RNG seed."""

    mode: str
    setting: int
    n: tuple[int, ...]
    tau: tuple[float, ...]
    alpha: tuple[float, ...] = (0.05,)
    R: int = 500
    B: int = 500
    beta1_grid: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3)
    beta0: float = 1.0
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.mode not in ("typeI", "coverage", "power"):
            raise ValueError("mode must be typeI, coverage, or power")
        if self.R < 100:
            raise ValueError("R must be at least 100")
        for name in ("n", "tau", "alpha", "beta1_grid"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
            if len(getattr(self, name)) == 0:
                raise ValueError(f"{name} grid is empty")

    def echo(self) -> dict:
        return {
            "mode": self.mode, "setting": self.setting, "n": list(self.n),
            "tau": list(self.tau), "alpha": list(self.alpha), "R": self.R,
            "B": self.B, "beta1_grid": list(self.beta1_grid),
            "beta0": self.beta0, "seed": self.seed,
        }


@dataclass
class ExperimentSummary:
    """Tidy per-cell records plus runtime and a config echo."""

    mode: str
    rows: list[dict]
    runtime: float
    config: dict

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)


def _mc_se(rate: float, R: int) -> float:
    return float(np.sqrt(rate * (1.0 - rate) / R))


def _rep_seeds(seed: int, R: int, n_cells: int) -> list[list[tuple[int, ...]]]:
    """Per-cell, per-replicate integer seed tuples derived from the plan seed."""
    cells = np.random.SeedSequence(seed).spawn(n_cells)
    out = []
    for cell in cells:
        reps = cell.spawn(R)
        out.append([tuple(int(s) for s in r.generate_state(4, dtype=np.uint64)) for r in reps])
    return out


def _run_replicates(fn, tasks, n_jobs: int) -> list:
    if n_jobs <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        chunk = max(1, len(tasks) // (n_jobs * 4))
        return list(pool.map(fn, tasks, chunksize=chunk))


def _typeI_rep(task) -> tuple[float, float]:
    setting, n, tau, beta0, B, data_seed, boot_seed = task
    sim = gen_setting(SimSetting(setting, n, beta0, 0.0, tau, data_seed))
    res = run_tests(sim.dataset, QuantileSpec(tau), A=[_X_COL], q=_Q_CONSTRAINED,
                    cfg=BootstrapConfig(B=B, seed=boot_seed))
    return res["LR"].p_value, res["RB"].p_value


def run_type1(plan: ExperimentPlan) -> ExperimentSummary:
    """Rejection rates of the LR and RB bootstrap tests under the null b1 = 0."""
    if plan.mode != "typeI":
        raise ValueError("plan.mode must be typeI")
    start = time.perf_counter()
    cells = [(n, tau) for n in plan.n for tau in plan.tau]
    seeds = _rep_seeds(plan.seed, plan.R, len(cells))
    rows = []
    for c, (n, tau) in enumerate(cells):
        tasks = [
            (plan.setting, n, tau, plan.beta0, plan.B, s[0], s[1])
            for s in seeds[c]
        ]
        pvals = np.array(_run_replicates(_typeI_rep, tasks, plan.n_jobs))
        for alpha in plan.alpha:
            for j, method in enumerate(("LR", "RB")):
                rate = float(np.mean(pvals[:, j] <= alpha))
                rows.append({
                    "setting": plan.setting, "n": n, "tau": tau, "alpha": alpha,
                    "method": method, "rate": rate, "mc_se": _mc_se(rate, plan.R),
                    "R": plan.R, "B": plan.B,
                })
    return ExperimentSummary("typeI", rows, time.perf_counter() - start, plan.echo())


def _coverage_rep(task) -> dict[str, list[bool]]:
    setting, n, tau, beta0, B, alphas, seeds = task
    out = {}
    for case, beta1, dseed, bseed in (
        ("binding", 0.0, seeds[0], seeds[1]),
        ("nonbinding", 1.0, seeds[2], seeds[3]),
    ):
        sim = gen_setting(SimSetting(setting, n, beta0, beta1, tau, dseed))
        spec = QuantileSpec(tau)
        fit = fit_constrained(sim.dataset, spec, _Q_CONSTRAINED)
        h = select_bandwidth_cv(fit.residuals)
        pm = prepare_model(sim.dataset.X, fit, h)
        m = select_block_size(GradientSeries.from_fit(sim.dataset.X, fit.residuals, tau))
        V = normal_multipliers(bseed, B, n - m + 1)
        _, _, lam = lambda_draws(pm, m, V)
        hits = []
        for alpha in alphas:
            lo, hi = percentile_interval(fit.beta, lam, n, alpha)
            hits.append(bool(lo[_X_COL] <= beta1 <= hi[_X_COL]))
        out[case] = hits
    return out


def run_coverage(plan: ExperimentPlan) -> ExperimentSummary:
    """Empirical CI coverage for b1 in the binding (0) and non-binding (1) cases."""
    if plan.mode != "coverage":
        raise ValueError("plan.mode must be coverage")
    start = time.perf_counter()
    cells = [(n, tau) for n in plan.n for tau in plan.tau]
    seeds = _rep_seeds(plan.seed, plan.R, len(cells))
    rows = []
    for c, (n, tau) in enumerate(cells):
        tasks = [
            (plan.setting, n, tau, plan.beta0, plan.B, tuple(plan.alpha), s)
            for s in seeds[c]
        ]
        results = _run_replicates(_coverage_rep, tasks, plan.n_jobs)
        for case in ("binding", "nonbinding"):
            hit = np.array([r[case] for r in results], dtype=float)
            for a, alpha in enumerate(plan.alpha):
                rate = float(np.mean(hit[:, a]))
                rows.append({
                    "setting": plan.setting, "n": n, "tau": tau, "alpha": alpha,
                    "case": case, "coverage": rate, "mc_se": _mc_se(rate, plan.R),
                    "R": plan.R, "B": plan.B,
                })
    return ExperimentSummary("coverage", rows, time.perf_counter() - start, plan.echo())


_POWER_METHODS = (
    "lr_constrained", "rb_constrained", "wald_constrained",
    "lr_unconstrained", "rb_unconstrained", "wald_unconstrained",
)


def _power_rep(task) -> dict[str, list[float]]:
    """One replicate of all six methods over every candidate block size.

    Returns, per method, the rejection indicator at the nominal level for
    each m in m_list.  Fits, bandwidths, and sandwich matrices are shared
    across the block sizes; each (pipeline, m) pair draws its multipliers
    from its own substream.
    """
    setting, n, tau, beta0, beta1, B, alpha, m_list, data_seed, boot_seed = task
    sim = gen_setting(SimSetting(setting, n, beta0, beta1, tau, data_seed))
    data = sim.dataset
    spec = QuantileSpec(tau)
    A = [_X_COL]
    keep = [0]
    pipelines = np.random.SeedSequence(boot_seed).spawn(2)
    out: dict[str, list[float]] = {}
    for q, suffix, pipe_ss in ((_Q_CONSTRAINED, "constrained", pipelines[0]),
                               (0, "unconstrained", pipelines[1])):
        full = fit_constrained(data, spec, q) if q else fit_unconstrained(data, spec)
        restr = fit_restricted(data, spec, A, q)
        h = select_bandwidth_cv(full.residuals)
        pm_full = prepare_model(data.X, full, h)
        pm_restr = prepare_model(data.X[:, keep], restr, h)
        T_lr = lr_statistic(restr, full)
        T_rb = rb_statistic(data, spec, full, restr, A)
        XA = data.X[:, A]
        Xi_rb = sandwich_matrix(full.residuals, XA, data.X, h)
        Xi_rb0 = sandwich_matrix(restr.residuals, XA, data.X[:, keep], h)
        d_cho = cho_factor(ridge_regularize(XA.T @ XA / n, "tested-column Gram matrix"), lower=True)
        lr, rb, wald = [], [], []
        for m, m_ss in zip(m_list, pipe_ss.spawn(len(m_list))):
            V = normal_multipliers(m_ss, B, n - m + 1)
            Psi, _, Lam = lambda_draws(pm_full, m, V)
            Psi0, _, Lam0 = lambda_draws(pm_restr, m, V)
            lr_reps = _g1_batch(Lam0, pm_restr.Xi, Psi0) - _g1_batch(Lam, pm_full.Xi, Psi)
            lr.append(float(np.mean(lr_reps >= T_lr) <= alpha))
            U = Lam @ Xi_rb.T - Lam0 @ Xi_rb0.T
            rb_reps = np.einsum("bi,bi->b", U, cho_solve(d_cho, U.T).T)
            rb.append(float(np.mean(rb_reps >= T_rb) <= alpha))
            lo = full.beta[_X_COL] - np.quantile(Lam[:, _X_COL], 1.0 - alpha) / np.sqrt(n)
            wald.append(float(lo > 0.0))
        out[f"lr_{suffix}"] = lr
        out[f"rb_{suffix}"] = rb
        out[f"wald_{suffix}"] = wald
    return out


def _power_rates(results: list[dict], method: str) -> np.ndarray:
    return np.array([r[method] for r in results], dtype=float).mean(axis=0)


def run_power(plan: ExperimentPlan) -> ExperimentSummary:
    """Calibrated-level power comparison of all six methods.

    A calibration pass under the null picks, per method, the block size whose
    type-I error is closest to the nominal level; the power curve over the
    beta1 grid then uses that block size per method.
    """
    if plan.mode != "power":
        raise ValueError("plan.mode must be power")
    start = time.perf_counter()
    alpha = plan.alpha[0]
    grid = sorted(set(plan.beta1_grid) | {0.0})
    cells = [(n, tau) for n in plan.n for tau in plan.tau]
    # one seed block per (cell, beta1 value)
    seeds = _rep_seeds(plan.seed, plan.R, len(cells) * len(grid))
    rows = []
    for c, (n, tau) in enumerate(cells):
        m_candidates = [int(m) for m in default_block_grid(n)]
        base = (plan.setting, n, tau, plan.beta0)

        cal_seeds = seeds[c * len(grid) + grid.index(0.0)]
        tasks = [base + (0.0, plan.B, alpha, tuple(m_candidates), s[0], s[1])
                 for s in cal_seeds]
        cal = _run_replicates(_power_rep, tasks, plan.n_jobs)

        chosen: dict[str, int] = {}
        size_at: dict[str, float] = {}
        for method in _POWER_METHODS:
            rates = _power_rates(cal, method)
            k = int(np.argmin(np.abs(rates - alpha)))  # argmin takes first: smaller m
            chosen[method] = m_candidates[k]
            size_at[method] = float(rates[k])

        for method in _POWER_METHODS:
            rows.append({
                "setting": plan.setting, "n": n, "tau": tau, "alpha": alpha,
                "method": method, "beta1": 0.0, "power": size_at[method],
                "mc_se": _mc_se(size_at[method], plan.R), "m": chosen[method],
                "R": plan.R, "B": plan.B,
            })

        m_needed = sorted(set(chosen.values()))
        for b1 in grid:
            if b1 == 0.0:
                continue
            b_seeds = seeds[c * len(grid) + grid.index(b1)]
            tasks = [base + (b1, plan.B, alpha, tuple(m_needed), s[0], s[1])
                     for s in b_seeds]
            results = _run_replicates(_power_rep, tasks, plan.n_jobs)
            for method in _POWER_METHODS:
                rates = _power_rates(results, method)
                rate = float(rates[m_needed.index(chosen[method])])
                rows.append({
                    "setting": plan.setting, "n": n, "tau": tau, "alpha": alpha,
                    "method": method, "beta1": b1, "power": rate,
                    "mc_se": _mc_se(rate, plan.R), "m": chosen[method],
                    "R": plan.R, "B": plan.B,
                })
    return ExperimentSummary("power", rows, time.perf_counter() - start, plan.echo())


def run_plan(plan: ExperimentPlan) -> ExperimentSummary:
    """Dispatch on plan.mode."""
    return {"typeI": run_type1, "coverage": run_coverage, "power": run_power}[plan.mode](plan)
