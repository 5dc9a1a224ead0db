import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coneqr.data import Dataset, QuantileSpec
from coneqr.solver import (
    check_loss,
    fit_constrained,
    fit_restricted,
    fit_unconstrained,
    psi,
)

from oracles import best_constrained_loss, best_unconstrained_loss, subgradient_feasible


def intercept_only(y):
    y = np.asarray(y, dtype=float)
    return Dataset(y, np.ones((len(y), 1)))


def random_instance(rng, n=8, p=2):
    X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    beta = rng.normal(size=p)
    y = X @ beta + rng.normal(size=n)
    return Dataset(y, X)


class TestCheckLoss:
    def test_examples(self):
        assert check_loss(1.0, 0.5) == pytest.approx(0.5)
        assert check_loss(-1.0, 0.8) == pytest.approx(0.2)
        assert check_loss(0.0, 0.3) == 0.0

    @given(st.floats(-1e6, 1e6), st.floats(0.01, 0.99))
    def test_nonnegative_zero_iff_zero(self, u, tau):
        val = check_loss(u, tau)
        assert val >= 0.0
        assert (val == 0.0) == (u == 0.0)


class TestPsi:
    def test_examples(self):
        assert psi(-2.0, 0.5) == pytest.approx(-0.5)
        assert psi(3.0, 0.8) == pytest.approx(0.8)
        # left-derivative convention at the kink
        assert psi(0.0, 0.8) == pytest.approx(0.8)

    @given(st.floats(-1e6, 1e6), st.floats(0.01, 0.99))
    def test_range(self, u, tau):
        assert tau - 1.0 <= psi(u, tau) <= tau


class TestFitUnconstrained:
    def test_median(self):
        res = fit_unconstrained(intercept_only([1.0, 2.0, 3.0]), QuantileSpec(0.5))
        assert res.beta[0] == pytest.approx(2.0, abs=1e-8)
        assert res.loss == pytest.approx(1.0, abs=1e-8)

    def test_outlier_sample(self):
        data = intercept_only([0.0, 0.0, 0.0, 10.0])
        res = fit_unconstrained(data, QuantileSpec(0.5))
        oracle = best_unconstrained_loss(data.X, data.y, 0.5)
        assert res.loss == pytest.approx(oracle, abs=1e-8)
        assert res.loss == pytest.approx(5.0, abs=1e-8)
        assert res.beta[0] == pytest.approx(0.0, abs=1e-6)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_enumeration(self, seed):
        rng = np.random.default_rng(seed)
        data = random_instance(rng)
        tau = float(rng.uniform(0.1, 0.9))
        res = fit_unconstrained(data, QuantileSpec(tau))
        oracle = best_unconstrained_loss(data.X, data.y, tau)
        assert res.loss == pytest.approx(oracle, abs=1e-8)

    def test_rank_deficient_errors(self):
        X = np.column_stack([np.ones(10), np.ones(10)])
        with pytest.raises(ValueError, match="rank deficient"):
            fit_unconstrained(Dataset(np.arange(10.0), X), QuantileSpec(0.5))

    def test_loss_consistent_with_residuals(self):
        rng = np.random.default_rng(5)
        data = random_instance(rng, n=40, p=3)
        res = fit_unconstrained(data, QuantileSpec(0.3))
        direct = float(np.sum(check_loss(res.residuals, 0.3)))
        assert res.loss == pytest.approx(direct, rel=1e-12)


class TestFitConstrained:
    def test_negative_median_clipped(self):
        res = fit_constrained(intercept_only([-3.0, -2.0, -1.0]), QuantileSpec(0.5), q=1)
        assert res.beta[0] == 0.0
        assert res.loss == pytest.approx(3.0, abs=1e-8)
        assert list(res.active) == [0]

    def test_interior_matches_unconstrained(self):
        rng = np.random.default_rng(1)
        X = np.column_stack([np.ones(60), rng.normal(size=60)])
        y = X @ np.array([2.0, 1.5]) + rng.normal(size=60)
        data = Dataset(y, X)
        unc = fit_unconstrained(data, QuantileSpec(0.5))
        assert np.all(unc.beta > 0)
        con = fit_constrained(data, QuantileSpec(0.5), q=2)
        assert con.loss == pytest.approx(unc.loss, abs=1e-8)
        assert con.beta == pytest.approx(unc.beta, abs=1e-6)

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_active_set_enumeration(self, seed):
        rng = np.random.default_rng(100 + seed)
        data = random_instance(rng)
        # pull the truth negative so the constraints bind often
        data = Dataset(data.y - 1.5 * data.X[:, 1], data.X)
        tau = float(rng.uniform(0.1, 0.9))
        res = fit_constrained(data, QuantileSpec(tau), q=2)
        oracle = best_constrained_loss(data.X, data.y, tau, q=2)
        assert np.all(res.beta >= 0.0)
        assert res.loss == pytest.approx(oracle, abs=1e-8)

    def test_q_validation(self):
        data = intercept_only([1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            fit_constrained(data, QuantileSpec(0.5), q=0)
        with pytest.raises(ValueError):
            fit_constrained(data, QuantileSpec(0.5), q=2)


class TestFitRestricted:
    def test_empty_A_is_full_fit(self):
        rng = np.random.default_rng(2)
        data = random_instance(rng, n=30)
        full = fit_constrained(data, QuantileSpec(0.5), q=2)
        res = fit_restricted(data, QuantileSpec(0.5), A=[], q=2)
        assert res.loss == pytest.approx(full.loss, abs=1e-10)
        assert list(res.columns) == [0, 1]

    def test_drop_slope_gives_intercept_only(self):
        rng = np.random.default_rng(3)
        data = random_instance(rng, n=30)
        res = fit_restricted(data, QuantileSpec(0.5), A=[1], q=2)
        sub = Dataset(data.y, data.X[:, :1])
        direct = fit_constrained(sub, QuantileSpec(0.5), q=1)
        assert res.beta.shape == (1,)
        assert res.q == 1
        assert res.loss == pytest.approx(direct.loss, abs=1e-10)

    def test_compositional_oracle(self):
        rng = np.random.default_rng(4)
        n = 40
        X = np.column_stack([np.ones(n), rng.normal(size=(n, 3))])
        y = X @ np.array([1.0, 0.5, -0.2, 0.3]) + rng.normal(size=n)
        data = Dataset(y, X)
        res = fit_restricted(data, QuantileSpec(0.3), A=[2], q=2)
        dropped = Dataset(y, X[:, [0, 1, 3]], require_intercept=False)
        direct = fit_constrained(dropped, QuantileSpec(0.3), q=2)
        assert res.loss == pytest.approx(direct.loss, abs=1e-10)
        assert list(res.columns) == [0, 1, 3]

    def test_invalid_A(self):
        data = random_instance(np.random.default_rng(6))
        with pytest.raises(ValueError):
            fit_restricted(data, QuantileSpec(0.5), A=[0], q=2)
        with pytest.raises(ValueError):
            fit_restricted(data, QuantileSpec(0.5), A=[5], q=2)


class TestInvariants:
    @pytest.mark.parametrize("seed", range(10))
    def test_subgradient_optimality(self, seed):
        rng = np.random.default_rng(200 + seed)
        data = random_instance(rng, n=50, p=3)
        tau = float(rng.uniform(0.15, 0.85))
        res = fit_unconstrained(data, QuantileSpec(tau))
        assert subgradient_feasible(data.X, data.y, tau, res.beta)

    @pytest.mark.parametrize("seed", range(10))
    def test_at_most_p_zero_residuals(self, seed):
        rng = np.random.default_rng(300 + seed)
        data = random_instance(rng, n=60, p=3)
        res = fit_unconstrained(data, QuantileSpec(0.5))
        scale = max(1.0, float(np.max(np.abs(data.y))))
        assert np.sum(np.abs(res.residuals) <= 1e-7 * scale) <= data.p

    @pytest.mark.parametrize("seed", range(10))
    def test_monotone_losses(self, seed):
        rng = np.random.default_rng(400 + seed)
        data = random_instance(rng, n=40, p=3)
        tau = float(rng.uniform(0.2, 0.8))
        unc = fit_unconstrained(data, QuantileSpec(tau))
        con = fit_constrained(data, QuantileSpec(tau), q=2)
        restr = fit_restricted(data, QuantileSpec(tau), A=[2], q=2)
        assert con.loss >= unc.loss - 1e-8
        assert restr.loss >= con.loss - 1e-8

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.1, 0.9), st.integers(11, 40))
    def test_quantile_level_coherence(self, seed, tau, n):
        rng = np.random.default_rng(seed)
        y = np.sort(rng.normal(size=n))
        res = fit_unconstrained(intercept_only(y), QuantileSpec(tau))
        lo = y[max(0, int(np.floor(n * tau)) - 1)]
        hi = y[min(n - 1, int(np.ceil(n * tau)) + 1 - 1)]
        assert lo - 1e-9 <= res.beta[0] <= hi + 1e-9
