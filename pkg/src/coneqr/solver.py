"""Check-loss quantile regression fits via an interior-point linear program.

The fitting problem

    min_beta  sum_i rho_tau(y_i - x_i' beta)    s.t.  beta_j >= 0, j < q

is the residual-split primal LP (u+, u- >= 0, sign constraints on the first
q coefficients).  It is solved by a primal-dual Mehrotra predictor-corrector
iteration whose Newton systems reduce to p x p normal equations, so each
iteration costs O(n p^2).  The iteration drives the relative duality gap to
1e-9 (hard requirement) and keeps going opportunistically to ~1e-12 so that
attained losses are comparable against enumeration oracles at tight
tolerances.  With non-unique minimizers the iterate converges to the analytic
center of the optimal face, so losses (not coefficients) are the stable
output in degenerate cases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .data import Dataset, QuantileSpec

# Coefficients this close to the boundary count as active constraints.
ACTIVITY_TOL = 1e-9

_GAP_TOL = 1e-9        # required relative duality gap
_GAP_POLISH = 1e-12    # keep iterating toward this while progress is fast
_FEAS_TOL = 1e-9
_MAX_ITER = 200
_STEP_DAMP = 0.99995


class SolverError(RuntimeError):
    """Raised when the interior-point iteration cannot certify optimality."""

    def __init__(self, message: str, iterations: int = 0, gap: float = np.nan):
        super().__init__(f"{message} (iterations={iterations}, gap={gap:.3e})")
        self.iterations = iterations
        self.gap = gap


def check_loss(u, tau: float):
    """Quantile check loss rho_tau(u) = u * (tau - 1{u < 0})."""
    u = np.asarray(u, dtype=float)
    out = u * (tau - (u < 0))
    return out if out.ndim else float(out)


def psi(u, tau: float):
    """Left derivative of the check loss: tau - 1{u < 0}; psi(0) = tau."""
    u = np.asarray(u, dtype=float)
    out = tau - (u < 0).astype(float)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class FitResult:
    """Fitted quantile regression coefficients and diagnostics.

    ``beta`` is reported in the coordinate system of the design that was fit
    (for restricted fits, ``columns`` maps positions back to the full-model
    column indices).  ``active`` lists constrained coordinates sitting on the
    boundary, ``q`` is the number of leading sign-constrained coordinates of
    this fit.
    """

    beta: np.ndarray
    residuals: np.ndarray
    loss: float
    active: np.ndarray
    constrained: bool
    tau: float
    q: int
    columns: np.ndarray | None = None
    iterations: int = 0

    @property
    def n(self) -> int:
        return self.residuals.shape[0]


def _column_scales(X: np.ndarray) -> np.ndarray:
    """Positive per-column scale factors (mean absolute deviation).

    Pure scaling keeps sign constraints intact; columns are never centered.
    """
    mad = np.mean(np.abs(X - X.mean(axis=0)), axis=0)
    fallback = np.mean(np.abs(X), axis=0)
    scales = np.where(mad > 1e-12, mad, np.where(fallback > 1e-12, fallback, 1.0))
    return scales


def _max_step(v: np.ndarray, dv: np.ndarray) -> float:
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(v[neg] / -dv[neg])))


def _interior_point(X: np.ndarray, y: np.ndarray, tau: float, q: int):
    """Mehrotra predictor-corrector for the residual-split quantile LP.

    Returns (beta, iterations, gap).  Raises SolverError if the relative
    duality gap 1e-9 is not certified within the iteration cap.
    """
    n, p = X.shape
    Xt = X.T

    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    res = y - X @ beta
    up = np.maximum(res, 0.0) + 1.0
    un = np.maximum(-res, 0.0) + 1.0
    nu = np.full(n, tau - 0.5)
    s = np.maximum(beta[:q], 0.0) + 1.0
    e = np.ones(q)

    achieved = False
    prev_gap = np.inf
    gap = np.inf
    it = 0
    for it in range(1, _MAX_ITER + 1):
        lamp = np.maximum(tau - nu, 1e-250)
        lamn = np.maximum(1.0 - tau + nu, 1e-250)
        rp = y - X @ beta - up + un
        r2 = s - beta[:q]
        rd = -(Xt @ nu)
        rd[:q] -= e

        gap = float(up @ lamp + un @ lamn + (s @ e if q else 0.0))
        pobj = tau * up.sum() + (1.0 - tau) * un.sum()
        scale = 1.0 + abs(pobj)
        feas_ok = (
            np.max(np.abs(rp), initial=0.0) <= _FEAS_TOL * (1.0 + np.max(np.abs(y), initial=0.0))
            and np.max(np.abs(r2), initial=0.0) <= _FEAS_TOL * (1.0 + np.max(np.abs(beta), initial=0.0))
            and np.max(np.abs(rd), initial=0.0) <= _FEAS_TOL * (1.0 + np.max(np.abs(nu), initial=0.0))
        )
        if feas_ok and gap <= _GAP_TOL * scale:
            achieved = True
            if gap <= _GAP_POLISH * scale or gap > 0.2 * prev_gap:
                break
        if not np.isfinite(gap):
            break
        prev_gap = gap

        d = up / lamp + un / lamn
        dinv = 1.0 / d
        M = (X * dinv[:, None]).T @ X
        if q:
            M[np.arange(q), np.arange(q)] += e / s
        try:
            cho = cho_factor(M, lower=True)
        except LinAlgError:
            M[np.arange(p), np.arange(p)] += 1e-12 * (np.trace(M) / p + 1.0)
            try:
                cho = cho_factor(M, lower=True)
            except LinAlgError:
                break

        def newton(rcp, rcn, rcs, w=None):
            if w is None:
                w = rp - rcp / lamp + rcn / lamn
            rhs = Xt @ (w * dinv) - rd
            if q:
                rhs[:q] += (rcs + e * r2) / s
            db = cho_solve(cho, rhs)
            dnu = (w - X @ db) * dinv
            dup = (rcp + up * dnu) / lamp
            dun = (rcn - un * dnu) / lamn
            ds = db[:q] - r2
            de = (rcs - e * ds) / np.maximum(s, 1e-250)
            return db, dup, dun, ds, dnu, de

        # affine (predictor) direction; w simplifies exactly to y - X beta
        rcs_aff = -(s * e)
        aff = newton(-(up * lamp), -(un * lamn), rcs_aff, w=y - X @ beta)
        db_a, dup_a, dun_a, ds_a, dnu_a, de_a = aff
        ap_aff = min(_max_step(up, dup_a), _max_step(un, dun_a), _max_step(s, ds_a))
        ad_aff = min(_max_step(lamp, -dnu_a), _max_step(lamn, dnu_a), _max_step(e, de_a))
        gap_aff = (
            (up + ap_aff * dup_a) @ (lamp - ad_aff * dnu_a)
            + (un + ap_aff * dun_a) @ (lamn + ad_aff * dnu_a)
            + ((s + ap_aff * ds_a) @ (e + ad_aff * de_a) if q else 0.0)
        )
        mu = gap / (2 * n + q)
        sigma = min(max((max(gap_aff, 0.0) / gap) ** 3, 1e-8), 1.0) if gap > 0 else 0.1

        # corrector with second-order complementarity terms
        rcp = sigma * mu - up * lamp + dup_a * dnu_a
        rcn = sigma * mu - un * lamn - dun_a * dnu_a
        rcs = sigma * mu - s * e - ds_a * de_a
        db, dup, dun, ds, dnu, de = newton(rcp, rcn, rcs)

        ap = _STEP_DAMP * min(_max_step(up, dup), _max_step(un, dun), _max_step(s, ds))
        ad = _STEP_DAMP * min(_max_step(lamp, -dnu), _max_step(lamn, dnu), _max_step(e, de))
        if ap < 1e-13 and ad < 1e-13:
            break
        beta = beta + ap * db
        up = up + ap * dup
        un = un + ap * dun
        s = s + ap * ds
        nu = nu + ad * dnu
        e = e + ad * de

    if not achieved:
        raise SolverError("interior-point iteration did not converge", it, gap)
    return beta, it, gap


def _fit(data: Dataset, spec: QuantileSpec, q: int, constrained: bool,
         columns: np.ndarray | None = None) -> FitResult:
    X, y = data.X, data.y
    scales = _column_scales(X)
    Xs = X / scales
    if np.linalg.matrix_rank(Xs) < data.p:
        raise ValueError("design matrix is rank deficient")
    beta_s, iters, _gap = _interior_point(Xs, y, spec.tau, q)
    beta = beta_s / scales
    if q:
        if np.any(beta[:q] < -1e-6):
            raise SolverError("constrained fit left the feasible cone", iters)
        # boundary coordinates are reported as exact zeros
        beta[:q][beta[:q] <= ACTIVITY_TOL] = 0.0
    residuals = y - X @ beta
    loss = float(np.sum(check_loss(residuals, spec.tau)))
    active = np.flatnonzero(beta[:q] == 0.0)
    return FitResult(
        beta=beta, residuals=residuals, loss=loss, active=active,
        constrained=constrained, tau=spec.tau, q=q, columns=columns,
        iterations=iters,
    )


def fit_unconstrained(data: Dataset, spec: QuantileSpec) -> FitResult:
    """Minimize the check loss over all of R^p."""
    return _fit(data, spec, q=0, constrained=False)


def fit_constrained(data: Dataset, spec: QuantileSpec, q: int) -> FitResult:
    """Minimize the check loss subject to beta_j >= 0 for the first q coords."""
    if not 1 <= q <= data.p:
        raise ValueError(f"need 1 <= q <= p, got q={q}, p={data.p}")
    return _fit(data, spec, q=q, constrained=True)


def fit_restricted(data: Dataset, spec: QuantileSpec, A, q: int) -> FitResult:
    """Constrained fit of the restricted model that drops design columns A.

    A is a set of 0-based column indices (the intercept column 0 cannot be
    dropped).  Sign constraints are inherited by the surviving coordinates
    whose original index is < q; because columns keep their relative order,
    those are exactly the leading coordinates of the restricted system.
    The result's ``columns`` holds the kept original indices.
    """
    A = np.unique(np.asarray(list(A), dtype=int))
    if A.size == 0:
        res = fit_constrained(data, spec, q) if q else fit_unconstrained(data, spec)
        return FitResult(
            beta=res.beta, residuals=res.residuals, loss=res.loss,
            active=res.active, constrained=res.constrained, tau=res.tau,
            q=res.q, columns=np.arange(data.p), iterations=res.iterations,
        )
    if A.min() < 1 or A.max() >= data.p:
        raise ValueError("tested index set must be within non-intercept columns")
    keep = np.setdiff1d(np.arange(data.p), A)
    sub = Dataset(data.y, data.X[:, keep], require_intercept=False)
    q0 = int(np.sum(keep < q))
    if q0:
        res = _fit(sub, spec, q=q0, constrained=True, columns=keep)
    else:
        res = _fit(sub, spec, q=0, constrained=False, columns=keep)
    return res
