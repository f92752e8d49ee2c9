"""Robust selection of the number of latent components.

Selects K for mixture models and probabilistic matrix factorizations by
accumulating per-component discrepancies above a cutoff rho: components a
model genuinely needs carry large discrepancies at too-small K, while
superfluous ones contribute little, so the accumulated excess is minimized at
a parsimonious K. The cutoff can be fixed, calibrated against labels, or
chosen automatically from stability intervals of penalized loss curves.
"""

from .baselines import (
    BaselineResult,
    bic_mixture,
    bic_pmf,
    elbow_select,
    gap_select,
    gmm_free_params,
    parallel_analysis,
    run_baselines,
    silhouette_score,
    silhouette_select,
    wcss,
)
from .criterion import (
    COUNT_WEIGHTED,
    UNWEIGHTED,
    AutoRhoConfig,
    CalibrationRun,
    DiscrepancyRow,
    DiscrepancyTable,
    LossCurve,
    SelectionResult,
    acdc_loss,
    auto_select_rho,
    build_loss_curve,
    build_loss_curves,
    calibrate_rho_supervised,
    run_acdc,
    select_fixed_rho,
    select_k,
)
from .divergence import (
    DensityOracle,
    DivergenceConfig,
    KernelSpec,
    KnnKlConfig,
    SinkhornConfig,
    SinkhornResult,
    gaussian_oracle,
    kl_gaussian_closed_form,
    kl_knn_one_sample,
    kl_knn_per_coordinate,
    kl_plugin_discrete,
    median_heuristic_bandwidth,
    mmd,
    mmd_squared,
    sinkhorn_unbalanced,
    uniform_unit_oracle,
)
from .matfact import (
    NmfConfig,
    NoiseSampleTable,
    PmfParams,
    component_discrepancies_pmf,
    fit_gaussian_fa,
    fit_poisson_nmf,
    generalized_kl,
    poisson_loglik,
    sample_noise,
    sample_noise_gaussian,
    sample_noise_poisson,
    split_counts_poisson,
    split_values_gaussian,
)
from .metrics import (
    MatchResult,
    SelectionAccuracy,
    ami,
    ari,
    cosine_difference,
    f_measure,
    match_components,
    relative_average_difference,
    selection_accuracy,
)
from .mixture import (
    ComponentSamples,
    DegenerateComponentError,
    EmConfig,
    MixtureParams,
    argmax_assignments,
    component_discrepancies_mixture,
    fit_gmm_em,
    gmm_loglik,
    responsibilities,
    sample_assignments,
)
from .synth import (
    PmfSynthSpec,
    SkewMixtureSpec,
    correlation_matrix,
    gen_gmm,
    gen_pmf_data,
    gen_skew_normal_mixture,
    random_pmf_truth,
    skew_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "AutoRhoConfig",
    "BaselineResult",
    "CalibrationRun",
    "ComponentSamples",
    "COUNT_WEIGHTED",
    "DegenerateComponentError",
    "DensityOracle",
    "DiscrepancyRow",
    "DiscrepancyTable",
    "DivergenceConfig",
    "EmConfig",
    "KernelSpec",
    "KnnKlConfig",
    "LossCurve",
    "MatchResult",
    "MixtureParams",
    "NmfConfig",
    "NoiseSampleTable",
    "PmfParams",
    "PmfSynthSpec",
    "SelectionAccuracy",
    "SelectionResult",
    "SinkhornConfig",
    "SinkhornResult",
    "SkewMixtureSpec",
    "UNWEIGHTED",
    "acdc_loss",
    "ami",
    "argmax_assignments",
    "ari",
    "auto_select_rho",
    "bic_mixture",
    "bic_pmf",
    "build_loss_curve",
    "build_loss_curves",
    "calibrate_rho_supervised",
    "component_discrepancies_mixture",
    "component_discrepancies_pmf",
    "correlation_matrix",
    "cosine_difference",
    "elbow_select",
    "f_measure",
    "fit_gaussian_fa",
    "fit_gmm_em",
    "fit_poisson_nmf",
    "gap_select",
    "gaussian_oracle",
    "gen_gmm",
    "gen_pmf_data",
    "gen_skew_normal_mixture",
    "generalized_kl",
    "gmm_free_params",
    "gmm_loglik",
    "kl_gaussian_closed_form",
    "kl_knn_one_sample",
    "kl_knn_per_coordinate",
    "kl_plugin_discrete",
    "match_components",
    "median_heuristic_bandwidth",
    "mmd",
    "mmd_squared",
    "parallel_analysis",
    "poisson_loglik",
    "random_pmf_truth",
    "relative_average_difference",
    "responsibilities",
    "run_acdc",
    "run_baselines",
    "sample_assignments",
    "sample_noise",
    "sample_noise_gaussian",
    "sample_noise_poisson",
    "select_fixed_rho",
    "select_k",
    "selection_accuracy",
    "silhouette_score",
    "silhouette_select",
    "sinkhorn_unbalanced",
    "skew_scenario",
    "split_counts_poisson",
    "split_values_gaussian",
    "uniform_unit_oracle",
    "wcss",
]
