"""Double-index propensity score (DiPS) estimation of average treatment
effects: regularized working models, two-dimensional higher-order kernel
calibration of the propensity score, normalized inverse-probability
weighting, and perturbation-resampling inference, plus a Monte Carlo
engine for benchmarking."""

__version__ = "0.1.0"

from .data import Dataset, Standardization, load_csv, standardize
from .errors import DipsError
from .estimators import (
    EffectEstimate,
    EstimatorConfig,
    estimate_dips,
    estimate_dr_alas,
    estimate_ipw_alas,
    normalized_ipw,
)
from .glm import (
    BINOMIAL,
    GAUSSIAN,
    Family,
    GlmFit,
    fit_adaptive_lasso,
    fit_ridge,
    refit_on_support,
    select_lambda,
)
from .inference import (
    PerturbationConfig,
    ResampleSummary,
    draw_weights,
    perturb_once,
    perturbation_summary,
    summarize,
)
from .simulation import ScenarioConfig, SimReport, gen_scenario, run_experiment
from .smoother import (
    DoubleIndexScores,
    PropensityEstimates,
    build_dips,
    dips_pi,
    kernel_q4,
    plugin_bandwidth,
    transform_scores,
)

__all__ = [
    "__version__",
    "Dataset",
    "Standardization",
    "load_csv",
    "standardize",
    "DipsError",
    "Family",
    "GAUSSIAN",
    "BINOMIAL",
    "GlmFit",
    "fit_ridge",
    "fit_adaptive_lasso",
    "select_lambda",
    "refit_on_support",
    "DoubleIndexScores",
    "PropensityEstimates",
    "kernel_q4",
    "transform_scores",
    "plugin_bandwidth",
    "dips_pi",
    "build_dips",
    "EstimatorConfig",
    "EffectEstimate",
    "normalized_ipw",
    "estimate_dips",
    "estimate_ipw_alas",
    "estimate_dr_alas",
    "PerturbationConfig",
    "ResampleSummary",
    "draw_weights",
    "perturb_once",
    "perturbation_summary",
    "summarize",
    "ScenarioConfig",
    "SimReport",
    "gen_scenario",
    "run_experiment",
]
