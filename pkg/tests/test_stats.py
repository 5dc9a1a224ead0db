import numpy as np
import pytest

from coneqr.data import Dataset, QuantileSpec
from coneqr.simulate import SimSetting, gen_setting
from coneqr.solver import FitResult, fit_constrained, fit_restricted, psi
from coneqr.stats import assemble_test_result, lr_statistic, rb_statistic

from oracles import loss_at


def fake_fit(n, p, loss, tau=0.5, q=0):
    return FitResult(
        beta=np.zeros(p), residuals=np.zeros(n), loss=loss,
        active=np.array([], dtype=int), constrained=bool(q), tau=tau, q=q,
    )


def make_instance(seed, n=40, p=2):
    rng = np.random.default_rng(seed)
    X = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    y = X @ np.abs(rng.normal(size=p)) + rng.normal(size=n)
    return Dataset(y, X)


class TestLRStatistic:
    def test_equal_fits_give_zero(self):
        data = make_instance(0)
        full = fit_constrained(data, QuantileSpec(0.5), q=2)
        restr = fit_restricted(data, QuantileSpec(0.5), A=[], q=2)
        assert lr_statistic(restr, full) == pytest.approx(0.0, abs=1e-10)

    def test_arithmetic(self):
        assert lr_statistic(fake_fit(10, 1, 12.5), fake_fit(10, 2, 10.0)) == pytest.approx(2.5)

    def test_recomputation_oracle(self):
        data = make_instance(1, n=6, p=2)
        spec = QuantileSpec(0.4)
        full = fit_constrained(data, spec, q=1)
        restr = fit_restricted(data, spec, A=[1], q=1)
        stat = lr_statistic(restr, full)
        direct = loss_at(data.X[:, :1], data.y, 0.4, restr.beta) - loss_at(
            data.X, data.y, 0.4, full.beta)
        assert stat == pytest.approx(direct, abs=1e-10)
        assert stat >= -1e-8

    def test_mismatched_tau_rejected(self):
        with pytest.raises(ValueError, match="quantile"):
            lr_statistic(fake_fit(10, 1, 5.0, tau=0.4), fake_fit(10, 2, 4.0, tau=0.5))

    def test_mismatched_n_rejected(self):
        with pytest.raises(ValueError, match="length"):
            lr_statistic(fake_fit(10, 1, 5.0), fake_fit(12, 2, 4.0))

    @pytest.mark.parametrize("seed", range(10))
    def test_nonnegative(self, seed):
        data = make_instance(100 + seed)
        tau = float(np.random.default_rng(seed).uniform(0.2, 0.8))
        spec = QuantileSpec(tau)
        full = fit_constrained(data, spec, q=2)
        restr = fit_restricted(data, spec, A=[1], q=2)
        assert lr_statistic(restr, full) >= -1e-8


class TestRBStatistic:
    def test_identical_residual_patterns_give_zero(self):
        data = make_instance(2)
        spec = QuantileSpec(0.5)
        full = fit_constrained(data, spec, q=2)
        # same fit supplied twice: S1 == S0 exactly
        assert rb_statistic(data, spec, full, full, A=[1]) == pytest.approx(0.0, abs=1e-12)

    def test_scalar_hand_case(self):
        data = make_instance(3, n=8)
        spec = QuantileSpec(0.3)
        full = fit_constrained(data, spec, q=2)
        restr = fit_restricted(data, spec, A=[1], q=2)
        x1 = data.X[:, 1]
        s1 = float(np.sum(psi(full.residuals, 0.3) * x1))
        s0 = float(np.sum(psi(restr.residuals, 0.3) * x1))
        expected = (s1 - s0) ** 2 / float(np.sum(x1 * x1))
        got = rb_statistic(data, spec, full, restr, A=[1])
        assert got == pytest.approx(expected, abs=1e-10)
        assert got >= 0.0

    def test_permutation_invariance(self):
        rng = np.random.default_rng(4)
        n = 50
        X = np.column_stack([np.ones(n), rng.normal(size=(n, 3))])
        y = X @ np.array([1.0, 0.3, -0.2, 0.1]) + rng.normal(size=n)
        data = Dataset(y, X)
        data_swapped = Dataset(y, X[:, [0, 1, 3, 2]])
        spec = QuantileSpec(0.5)
        full = fit_constrained(data, spec, q=1)
        restr = fit_restricted(data, spec, A=[2, 3], q=1)
        full_s = fit_constrained(data_swapped, spec, q=1)
        restr_s = fit_restricted(data_swapped, spec, A=[2, 3], q=1)
        t1 = rb_statistic(data, spec, full, restr, A=[2, 3])
        t2 = rb_statistic(data_swapped, spec, full_s, restr_s, A=[3, 2])
        assert t1 == pytest.approx(t2, abs=1e-10)

    def test_collinear_tested_columns(self):
        n = 30
        rng = np.random.default_rng(5)
        x = rng.normal(size=n)
        X = np.column_stack([np.ones(n), x, x])
        data = Dataset(rng.normal(size=n), X)
        spec = QuantileSpec(0.5)
        full = fake_fit(n, 3, 1.0)
        restr = fake_fit(n, 1, 2.0)
        with pytest.raises(ValueError, match="collinear"):
            rb_statistic(data, spec, full, restr, A=[1, 2])

    def test_s1_nonzero_under_binding_constraints(self):
        """With the cone active, the full-model gradient sum need not vanish."""
        hits = 0
        for seed in range(50):
            sim = gen_setting(SimSetting(1, 100, 1.0, 0.0, 0.5, seed=seed))
            spec = QuantileSpec(0.5)
            full = fit_constrained(sim.dataset, spec, q=2)
            s1 = float(np.sum(psi(full.residuals, 0.5) * sim.dataset.X[:, 1]))
            if abs(s1) > 1.0:
                hits += 1
        assert hits >= 1


class TestPValueConventions:
    def test_statistic_below_all_replicates(self):
        res = assemble_test_result("LR", 0.5, np.array([1.0, 2.0, 3.0]), [1], 0.5, 8, 0.3)
        assert res.p_value == pytest.approx(1.0)
        assert res.frac_below == pytest.approx(0.0)

    def test_statistic_above_all_replicates(self):
        res = assemble_test_result("LR", 9.0, np.array([1.0, 2.0, 3.0]), [1], 0.5, 8, 0.3)
        assert res.p_value == pytest.approx(0.0)
        assert res.frac_below == pytest.approx(1.0)

    def test_counts_are_complementary(self):
        rng = np.random.default_rng(6)
        reps = rng.normal(size=200)
        res = assemble_test_result("RB", 0.1, reps, [1], 0.5, 8, 0.3)
        assert res.p_value + res.frac_below == pytest.approx(1.0)
        assert res.B == 200
