"""Shrinkage estimation of kernel means with exact Gaussian-mixture ground truth.

The empirical kernel mean (uniform weights over feature maps of the
sample) is admissible-looking but improvable: pulling it toward a fixed
target function lowers expected squared RKHS error for small samples.
This package provides the plain estimator and three shrinkage rules
(empirical-bound, closed-form uniform ridge, spectral ridge with
leave-one-out selection), exact losses and risks under Gaussian mixture
ground truths, a replicated experiment harness with CSV output, and a
Parzen window classifier built on the estimated class means.
"""

from .errors import (
    ClassSizeError,
    ConfigError,
    DataError,
    DegenerateBandwidthError,
    DegenerateGramError,
    InsufficientSampleError,
    KmshrinkError,
    NumericalError,
    PreconditionError,
    SelectionError,
    SingularLeaveOneOutError,
)
from .estimators import (
    EstimatorResult,
    EstimatorSpec,
    FunctionExpansion,
    SelectionMethod,
    ShrinkageSelection,
    b_kmse,
    default_lambda_grid,
    empirical_alpha_bound,
    empirical_risk,
    expansion_sqdist,
    generic_shrinkage,
    kme,
    r_kmse,
    r_kmse_lambda,
    run_estimator,
    s_kmse_loocv_naive,
    s_kmse_loocv_score,
    s_kmse_select_lambda,
    s_kmse_weights,
)
from .harness import (
    DEFAULT_ESTIMATORS,
    MEDIAN_RBF,
    EstimatorSummary,
    ExperimentConfig,
    ResultRecord,
    RiskResult,
    estimate_risk,
    improvement_over_distributions,
    percentage_improvement,
    probability_of_improvement,
    resolve_mixture,
    summarize,
    sweep,
)
from .kernels import (
    GramMatrix,
    KernelFamily,
    KernelSpec,
    centered_product_gram,
    cross_gram,
    eval_kernel,
    gram_matrix,
    median_heuristic,
)
from .moments import (
    GaussianMixture,
    expected_kernel_at,
    expected_kernel_double,
    expected_self_kernel,
    optimal_alpha,
    shrinkage_risk,
    target_distance_sq,
    theoretical_risk,
    true_loss,
    uniform_alpha_bound,
)
from .parzen import (
    LabeledDataset,
    Normalization,
    ParzenModel,
    compare_estimators,
    cv_bandwidth,
    parzen_predict,
    parzen_train,
    stratified_folds,
)
from .synthgen import GeneratorConfig, derive_seed, draw_mixture, rng, sample

__version__ = "0.1.0"

__all__ = [
    "ClassSizeError",
    "ConfigError",
    "DataError",
    "DegenerateBandwidthError",
    "DegenerateGramError",
    "InsufficientSampleError",
    "KmshrinkError",
    "NumericalError",
    "PreconditionError",
    "SelectionError",
    "SingularLeaveOneOutError",
    "EstimatorResult",
    "EstimatorSpec",
    "FunctionExpansion",
    "SelectionMethod",
    "ShrinkageSelection",
    "b_kmse",
    "default_lambda_grid",
    "empirical_alpha_bound",
    "empirical_risk",
    "expansion_sqdist",
    "generic_shrinkage",
    "kme",
    "r_kmse",
    "r_kmse_lambda",
    "run_estimator",
    "s_kmse_loocv_naive",
    "s_kmse_loocv_score",
    "s_kmse_select_lambda",
    "s_kmse_weights",
    "DEFAULT_ESTIMATORS",
    "MEDIAN_RBF",
    "EstimatorSummary",
    "ExperimentConfig",
    "ResultRecord",
    "RiskResult",
    "estimate_risk",
    "improvement_over_distributions",
    "percentage_improvement",
    "probability_of_improvement",
    "resolve_mixture",
    "summarize",
    "sweep",
    "GramMatrix",
    "KernelFamily",
    "KernelSpec",
    "centered_product_gram",
    "cross_gram",
    "eval_kernel",
    "gram_matrix",
    "median_heuristic",
    "GaussianMixture",
    "expected_kernel_at",
    "expected_kernel_double",
    "expected_self_kernel",
    "optimal_alpha",
    "shrinkage_risk",
    "target_distance_sq",
    "theoretical_risk",
    "true_loss",
    "uniform_alpha_bound",
    "LabeledDataset",
    "Normalization",
    "ParzenModel",
    "compare_estimators",
    "cv_bandwidth",
    "parzen_predict",
    "parzen_train",
    "stratified_folds",
    "GeneratorConfig",
    "derive_seed",
    "draw_mixture",
    "rng",
    "sample",
    "__version__",
]
