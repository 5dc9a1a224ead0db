"""Simulated piecewise time-varying AR(1) predictors and errors.

Three benchmark settings of y_i = b0 + b1 x_i + eps_i are provided: a
stationary homoscedastic one, a piecewise non-stationary homoscedastic one,
and a heteroscedastic one, with the errors centered so their conditional
tau-quantile given x is zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .data import Dataset

_COEF_BOUND = 0.99
DEFAULT_BURN_IN = 500


@dataclass(frozen=True)
class PiecewiseARSpec:
    """Time-varying AR(1) coefficient a(t) on segments split at breakpoints.

    coef_fns[r] gives a(t) on the r-th segment (b_r, b_{r+1}] of rescaled
    time; the process is e_i = a(t_i) e_{i-1} + eta_i with standard normal
    innovations, initialized by burn_in steps at the t = 1/n coefficient.
    """

    breakpoints: tuple[float, ...]
    coef_fns: tuple[Callable[[float], float], ...]
    burn_in: int = DEFAULT_BURN_IN

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "coef_fns", tuple(self.coef_fns))
        if any(not 0.0 < b < 1.0 for b in bp) or any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly ascending within (0, 1)")
        if len(self.coef_fns) != len(bp) + 1:
            raise ValueError("need one coefficient function per segment")
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")

    def coefficients(self, t: np.ndarray) -> np.ndarray:
        """a(t) for each rescaled time in t, validating |a| <= 0.99."""
        t = np.asarray(t, dtype=float)
        seg = np.searchsorted(np.asarray(self.breakpoints), t, side="left")
        a = np.array([self.coef_fns[s](ti) for s, ti in zip(seg, t)])
        if np.any(np.abs(a) > _COEF_BOUND):
            raise ValueError("AR coefficient exceeds the 0.99 bound")
        return a


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def gen_piecewise_ar(spec: PiecewiseARSpec, n: int, seed) -> np.ndarray:
    """One path of the time-varying AR(1) recursion, deterministic given seed."""
    rng = _as_rng(seed)
    t = np.arange(1, n + 1) / n
    a = spec.coefficients(t)
    a0 = float(spec.coefficients(np.array([1.0 / n]))[0])
    innov = rng.standard_normal(spec.burn_in + n + 1)
    e = innov[0]
    for b in range(spec.burn_in):
        e = a0 * e + innov[1 + b]
    out = np.empty(n)
    base = 1 + spec.burn_in
    for i in range(n):
        e = a[i] * e + innov[base + i]
        out[i] = e
    return out


def marginal_quantile_gaussian_ar(spec: PiecewiseARSpec, n: int, tau: float) -> np.ndarray:
    """Exact marginal tau-quantiles sqrt(v_i) * Phi^{-1}(tau) of the AR path.

    The variance recursion v_i = a(t_i)^2 v_{i-1} + 1 is run from v = 1
    through the same burn-in schedule as the generator, so the quantiles
    match the generated Gaussian path's marginals exactly.
    """
    t = np.arange(1, n + 1) / n
    a = spec.coefficients(t)
    a0 = float(spec.coefficients(np.array([1.0 / n]))[0])
    v = 1.0
    for _ in range(spec.burn_in):
        v = a0 * a0 * v + 1.0
    out = np.empty(n)
    for i in range(n):
        v = a[i] * a[i] * v + 1.0
        out[i] = v
    return np.sqrt(out) * norm.ppf(tau)


@dataclass(frozen=True)
class SimSetting:
    """One benchmark configuration of the linear model y = b0 + b1 x + eps."""

    setting: int
    n: int
    beta0: float
    beta1: float
    tau: float
    seed: int

    def __post_init__(self):
        if self.setting not in (1, 2, 3):
            raise ValueError("setting must be 1, 2, or 3")
        if self.n < 50:
            raise ValueError("n must be at least 50")
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")


@dataclass(frozen=True)
class SimulatedData:
    """Generated dataset together with the truth that produced it."""

    dataset: Dataset
    beta: np.ndarray
    x: np.ndarray
    eps: np.ndarray
    setting: SimSetting


def _x_spec(setting: int) -> PiecewiseARSpec:
    if setting == 1:
        return PiecewiseARSpec((), (lambda t: 0.5,))
    return PiecewiseARSpec((0.5,), (lambda t: -0.3, lambda t: 0.3))


def _e_spec(setting: int) -> PiecewiseARSpec:
    if setting == 1:
        return PiecewiseARSpec((), (lambda t: 0.5,))
    return PiecewiseARSpec((), (lambda t: 0.7 * np.cos(2.0 * np.pi * t),))


def gen_setting(s: SimSetting) -> SimulatedData:
    """Generate one dataset from the requested benchmark setting.

    Predictor and error innovations come from independent substreams of the
    seed.  The error path is centered at its marginal tau-quantile: the
    stationary value sqrt(4/3) Phi^{-1}(tau) in the stationary setting, the
    exact time-varying marginal quantile otherwise; the heteroscedastic
    setting then scales by sqrt(1 + x^2)/2.
    """
    kx, ke = np.random.SeedSequence(s.seed).spawn(2)
    x = gen_piecewise_ar(_x_spec(s.setting), s.n, np.random.default_rng(kx))
    e_spec = _e_spec(s.setting)
    e = gen_piecewise_ar(e_spec, s.n, np.random.default_rng(ke))
    if s.setting == 1:
        center = np.sqrt(1.0 / (1.0 - 0.25)) * norm.ppf(s.tau)
    else:
        center = marginal_quantile_gaussian_ar(e_spec, s.n, s.tau)
    if s.setting == 3:
        eps = np.sqrt(1.0 + x * x) * (e - center) / 2.0
    else:
        eps = e - center
    y = s.beta0 + s.beta1 * x + eps
    dataset = Dataset(y, np.column_stack([np.ones(s.n), x]))
    return SimulatedData(dataset=dataset, beta=np.array([s.beta0, s.beta1]),
                         x=x, eps=eps, setting=s)
