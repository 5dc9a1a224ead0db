"""Cone-constrained quantile regression with multiplier-bootstrap inference.

Fits linear quantile regressions whose coefficients satisfy inequality
constraints, for serially dependent (possibly non-stationary) data, and
provides confidence intervals and boundary-robust likelihood-ratio and
rank-based tests via a projected multiplier bootstrap.
"""

from .bootstrap import (
    BootstrapConfig,
    BootstrapDraw,
    CIResult,
    GradientSeries,
    block_sums,
    bootstrap_ci,
    bootstrap_test,
    default_block_grid,
    draw_lambda,
    g1,
    g2,
    multiplier_psi,
    normal_multipliers,
    run_tests,
    select_block_size,
)
from .constraints import CanonicalTransform, ConstraintSpec, canonicalize, transform_dataset
from .data import Dataset, QuantileSpec
from .harness import ExperimentPlan, ExperimentSummary, run_coverage, run_plan, run_power, run_type1
from .kernels import (
    SandwichEstimate,
    default_bandwidth_grid,
    gaussian_kernel,
    powell_sandwich,
    select_bandwidth_cv,
)
from .projection import ProjectionProblem, metric_project, metric_project_batch, theta_shift
from .simulate import (
    PiecewiseARSpec,
    SimSetting,
    SimulatedData,
    gen_piecewise_ar,
    gen_setting,
    marginal_quantile_gaussian_ar,
)
from .solver import (
    FitResult,
    SolverError,
    check_loss,
    fit_constrained,
    fit_restricted,
    fit_unconstrained,
    psi,
)
from .stats import TestResult, lr_statistic, rb_statistic

__version__ = "0.1.0"

__all__ = [
    "BootstrapConfig", "BootstrapDraw", "CIResult", "GradientSeries",
    "block_sums", "bootstrap_ci", "bootstrap_test", "default_block_grid",
    "draw_lambda", "g1", "g2", "multiplier_psi", "normal_multipliers",
    "run_tests", "select_block_size",
    "CanonicalTransform", "ConstraintSpec", "canonicalize", "transform_dataset",
    "Dataset", "QuantileSpec",
    "ExperimentPlan", "ExperimentSummary", "run_coverage", "run_plan",
    "run_power", "run_type1",
    "SandwichEstimate", "default_bandwidth_grid", "gaussian_kernel",
    "powell_sandwich", "select_bandwidth_cv",
    "ProjectionProblem", "metric_project", "metric_project_batch", "theta_shift",
    "PiecewiseARSpec", "SimSetting", "SimulatedData", "gen_piecewise_ar",
    "gen_setting", "marginal_quantile_gaussian_ar",
    "FitResult", "SolverError", "check_loss", "fit_constrained",
    "fit_restricted", "fit_unconstrained", "psi",
    "TestResult", "lr_statistic", "rb_statistic",
]
