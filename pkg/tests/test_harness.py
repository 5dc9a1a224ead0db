import numpy as np
import pytest

from coneqr.harness import (
    ExperimentPlan,
    run_coverage,
    run_plan,
    run_power,
    run_type1,
)


def small_plan(mode, **kw):
    base = dict(mode=mode, setting=1, n=(100,), tau=(0.5,), alpha=(0.05,),
                R=100, B=100, seed=11)
    base.update(kw)
    return ExperimentPlan(**base)


class TestPlanValidation:
    def test_mode_checked(self):
        with pytest.raises(ValueError, match="mode"):
            small_plan("bogus")

    def test_r_floor(self):
        with pytest.raises(ValueError, match="at least 100"):
            small_plan("typeI", R=50)

    def test_empty_grid(self):
        with pytest.raises(ValueError, match="empty"):
            small_plan("typeI", tau=())

    def test_mode_dispatch_guard(self):
        with pytest.raises(ValueError):
            run_type1(small_plan("coverage"))


class TestRunType1:
    def test_smoke_and_schema(self):
        summary = run_type1(small_plan("typeI", alpha=(0.05, 1.0)))
        assert summary.mode == "typeI"
        frame = summary.to_frame()
        assert set(frame["method"]) == {"LR", "RB"}
        assert np.all(frame["rate"].between(0, 1))
        for _, row in frame.iterrows():
            assert row["mc_se"] == pytest.approx(
                np.sqrt(row["rate"] * (1 - row["rate"]) / 100))
        # alpha = 1 rejects everything
        top = frame[frame["alpha"] == 1.0]
        assert np.all(top["rate"] == 1.0)
        # nominal 5%: not wildly off even in a smoke run
        mid = frame[frame["alpha"] == 0.05]
        assert np.all(mid["rate"] <= 0.2)

    def test_reproducible(self):
        a = run_type1(small_plan("typeI")).rows
        b = run_type1(small_plan("typeI")).rows
        assert a == b


class TestRunCoverage:
    def test_smoke(self):
        summary = run_coverage(small_plan("coverage"))
        frame = summary.to_frame()
        assert set(frame["case"]) == {"binding", "nonbinding"}
        assert np.all(frame["coverage"] >= 0.6)

    def test_near_full_interval_when_alpha_tiny(self):
        # alpha -> 0 limit: the interval spans the whole draw range, so
        # coverage is 1 up to the finite-B chance of landing outside it
        from coneqr.bootstrap import percentile_interval

        rng = np.random.default_rng(0)
        draws = rng.normal(size=(200, 2))
        beta = np.array([1.0, 0.3])
        lower, upper = percentile_interval(beta, draws, n=100, alpha=1e-6)
        np.testing.assert_allclose(lower, beta - draws.max(axis=0) / 10, atol=1e-9)
        np.testing.assert_allclose(upper, beta - draws.min(axis=0) / 10, atol=1e-9)

        summary = run_coverage(small_plan("coverage", alpha=(1e-6,)))
        frame = summary.to_frame()
        assert np.all(frame["coverage"] >= 0.95)


class TestRunPower:
    def test_smoke_calibration_and_dominance_structure(self):
        plan = small_plan("power", beta1_grid=(0.0, 0.8), B=100)
        summary = run_power(plan)
        frame = summary.to_frame()
        methods = set(frame["method"])
        assert len(methods) == 6
        # every method has a row per beta1 value with its calibrated m
        assert set(frame["beta1"]) == {0.0, 0.8}
        assert np.all(frame["m"] >= 1)
        # strong signal: constrained LR should reject much more often than at 0
        lr_con = frame[(frame["method"] == "lr_constrained")].set_index("beta1")["power"]
        assert lr_con[0.8] > lr_con[0.0] + 0.3

    def test_runs_via_dispatch(self):
        plan = small_plan("power", beta1_grid=(0.0,), B=100)
        summary = run_plan(plan)
        assert summary.mode == "power"
        assert len(summary.rows) == 6


class TestSummary:
    def test_config_echo_round_trip(self):
        plan = small_plan("typeI")
        summary = run_type1(plan)
        assert summary.config["seed"] == 11
        assert summary.config["mode"] == "typeI"
        assert summary.runtime > 0
