"""Kernel risk-sensitive loss and robust adaptive filtering."""

from krsl.batch_solver import (
    RegressionDataset,
    RobustnessScenario,
    fixed_point_solve,
    performance_surface,
    robustness_bound_rho,
    robustness_bound_xi,
    sigma_condition,
    surface_grid,
    validate_robustness_bound,
)
from krsl.exceptions import (
    ConfigError,
    DegenerateDataError,
    DimensionMismatchError,
    DivergenceError,
    EmptyDataError,
    InapplicableRegimeError,
    KrslError,
    NoSolutionError,
    ParameterDomainError,
    QuadratureAccuracyError,
    RankDeficiencyError,
    RejectedSampleError,
    StabilityViolationError,
)
from krsl.filters import FilterState, filter_step, mkrsl_score, mkrsl_variable_step, run_filter
from krsl.harness import (
    AlgorithmSpec,
    ConvergenceRecord,
    ExperimentConfig,
    compare_with_theory,
    matched_step_size,
    outlier_robustness_sweep,
    run_experiment,
)
from krsl.noise import Binary, Cauchy, Gaussian, Laplace, MixtureOutliers, RngSpec, SineWave, Uniform, sample_noise
from krsl.similarity import (
    KrslParams,
    c_loss,
    convexity_lambda_threshold,
    correntropy,
    empirical_krsl,
    gaussian_kernel,
    krsl_hessian_diag,
    krsl_of_error,
)
from krsl.theory import (
    TheoryConfig,
    h_G,
    h_U,
    steady_state_emse_exact,
    steady_state_emse_taylor,
    transient_curve,
)

__version__ = "0.1.0"

__all__ = [
    "AlgorithmSpec", "Binary", "Cauchy", "ConfigError", "ConvergenceRecord", "DegenerateDataError",
    "DimensionMismatchError", "DivergenceError", "EmptyDataError", "ExperimentConfig", "FilterState", "Gaussian",
    "InapplicableRegimeError", "KrslError", "KrslParams", "Laplace", "MixtureOutliers", "NoSolutionError",
    "ParameterDomainError", "QuadratureAccuracyError", "RankDeficiencyError", "RegressionDataset",
    "RejectedSampleError", "RngSpec", "RobustnessScenario", "SineWave", "StabilityViolationError", "TheoryConfig",
    "Uniform", "c_loss", "compare_with_theory", "convexity_lambda_threshold", "correntropy", "empirical_krsl",
    "filter_step", "fixed_point_solve", "gaussian_kernel", "h_G", "h_U", "krsl_hessian_diag", "krsl_of_error",
    "matched_step_size", "mkrsl_score", "mkrsl_variable_step", "outlier_robustness_sweep", "performance_surface",
    "robustness_bound_rho", "robustness_bound_xi", "run_experiment", "run_filter", "sample_noise",
    "sigma_condition", "steady_state_emse_exact", "steady_state_emse_taylor", "surface_grid", "transient_curve",
    "validate_robustness_bound",
]
