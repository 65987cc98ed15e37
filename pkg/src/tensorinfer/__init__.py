"""Estimation and inference for low-rank third-order tensors.

Four observation models are covered: dense noisy observation of a
low-multilinear-rank tensor, observation of an orthogonally
decomposable tensor, rank-one observation under sub-Gaussian noise,
and linear regression with random tensor covariates.  Each comes with
a constructive estimator whose subspace error concentrates tightly
enough that standardized statistics are asymptotically normal without
any debiasing step; the inference module builds those statistics,
confidence regions and entrywise intervals, and the simlab module
checks them by Monte Carlo.
"""

from .exceptions import (
    TensorInferError,
    ArgumentError,
    NumericError,
    FormatError,
    RankDeficiencyWarning,
)
from .tenalg import (
    as_tensor3,
    as_matrix,
    check_ranks,
    matricize,
    fold,
    mode_product,
    multilinear_product,
    kronecker,
    top_left_singular,
)
from .subspace import (
    SubspaceDistance,
    MatchResult,
    sin_theta,
    procrustes_align,
    match_components,
)
from .estimators import (
    TuckerFactors,
    OrthFactors,
    Rank1Fit,
    spectral_init,
    hooi,
    pca_refine,
    orth_refine,
    deflation_init,
    rank1_power,
    default_power_iterations,
)
from .regression import (
    RegressionDataset,
    SgdConfig,
    loss,
    solve_core,
    solve_factor,
    regression_two_step,
    sgd_init,
)
from .inference import (
    NoiseModel,
    InferenceReport,
    LinearFormQuery,
    normal_quantile_upper,
    lambda_norms,
    estimate_lambda_sigma_pca,
    noise_adjusted_singular_values,
    pca_subspace_statistic,
    pca_confidence_region_radius,
    regression_statistic_and_region,
    sigma_split_estimate,
    orth_component_statistic,
    rank1_linear_form_statistic,
    rank1_subgaussian_statistic,
    entrywise_statistic,
    entrywise_ci,
)
from .io import (
    write_tensor,
    read_tensor,
    write_dataset,
    read_dataset,
    sniff_format,
)
from .simlab import (
    GENERATOR_ID,
    EXPERIMENT_KINDS,
    SimConfig,
    ReplicateSummary,
    CoverageRate,
    replicate_rng,
    random_orthonormal,
    gen_tucker_instance,
    gen_orth_instance,
    gen_observation,
    gen_regression,
    perturb_subspace,
    perturb_unit,
    run_monte_carlo,
    ks_distance,
    coverage_rate,
)

__version__ = "0.1.0"

__all__ = [
    "TensorInferError",
    "ArgumentError",
    "NumericError",
    "FormatError",
    "RankDeficiencyWarning",
    "as_tensor3",
    "as_matrix",
    "check_ranks",
    "matricize",
    "fold",
    "mode_product",
    "multilinear_product",
    "kronecker",
    "top_left_singular",
    "SubspaceDistance",
    "MatchResult",
    "sin_theta",
    "procrustes_align",
    "match_components",
    "TuckerFactors",
    "OrthFactors",
    "Rank1Fit",
    "spectral_init",
    "hooi",
    "pca_refine",
    "orth_refine",
    "deflation_init",
    "rank1_power",
    "default_power_iterations",
    "RegressionDataset",
    "SgdConfig",
    "loss",
    "solve_core",
    "solve_factor",
    "regression_two_step",
    "sgd_init",
    "NoiseModel",
    "InferenceReport",
    "LinearFormQuery",
    "normal_quantile_upper",
    "lambda_norms",
    "estimate_lambda_sigma_pca",
    "noise_adjusted_singular_values",
    "pca_subspace_statistic",
    "pca_confidence_region_radius",
    "regression_statistic_and_region",
    "sigma_split_estimate",
    "orth_component_statistic",
    "rank1_linear_form_statistic",
    "rank1_subgaussian_statistic",
    "entrywise_statistic",
    "entrywise_ci",
    "write_tensor",
    "read_tensor",
    "write_dataset",
    "read_dataset",
    "sniff_format",
    "GENERATOR_ID",
    "EXPERIMENT_KINDS",
    "SimConfig",
    "ReplicateSummary",
    "CoverageRate",
    "replicate_rng",
    "random_orthonormal",
    "gen_tucker_instance",
    "gen_orth_instance",
    "gen_observation",
    "gen_regression",
    "perturb_subspace",
    "perturb_unit",
    "run_monte_carlo",
    "ks_distance",
    "coverage_rate",
    "__version__",
]
