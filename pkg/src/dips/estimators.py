"""Average-treatment-effect estimators built on the fitted components:
normalized IPW with smoothed double-index propensities, normalized IPW
with the parametric adaptive-LASSO propensity, and the augmented
(doubly-robust) estimator using both parametric fits.

All three share one set of working-model fits so that differences between
estimators isolate how the propensity enters, and every computation
accepts observation weights so resampling can reuse the same code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .data import Dataset, Standardization, standardize
from .errors import EstimationError
from .glm import BINOMIAL, GAUSSIAN, Family, GlmFit, fit_working_model
from .smoother import build_dips

__all__ = [
    "EstimatorConfig",
    "EffectEstimate",
    "WorkingFits",
    "METHODS",
    "normalized_ipw",
    "aipw_mu",
    "fit_components",
    "estimate_with_fits",
    "estimate_all",
    "estimate_dips",
    "estimate_ipw_alas",
    "estimate_dr_alas",
]

METHODS = ("dips", "ipw-alas", "dr-alas")

_EXTREME_PROB_TOL = 1e-12


@dataclass(frozen=True)
class EstimatorConfig:
    """Settings shared by every estimator in a run."""

    outcome_family: Family = GAUSSIAN
    standardize: bool = True
    gamma: float = 1.0
    ridge_lambda: float | None = None  # None -> 1/n at fit time
    criterion: str = "eric"
    eric_constant: float = 0.5
    arm_specific_slopes: bool = False
    h_override: float | None = None
    trim_ps: float | None = None  # clip propensities into [eps, 1-eps]

    def __post_init__(self):
        if self.trim_ps is not None and not 0.0 < self.trim_ps < 0.5:
            raise ValueError("trim_ps must lie in (0, 0.5)")


@dataclass(frozen=True)
class EffectEstimate:
    """Point estimate of the mean difference with optional inference."""

    method: str
    delta: float
    mu1: float
    mu0: float
    n: int
    p: int
    se: float | None = None
    ci: tuple[float, float] | None = None
    p_value: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def with_inference(self, se, ci, p_value, resample_failures) -> "EffectEstimate":
        diag = dict(self.diagnostics)
        diag["resample_failures"] = resample_failures
        return replace(self, se=se, ci=ci, p_value=p_value, diagnostics=diag)


@dataclass(frozen=True)
class WorkingFits:
    """Shared fitted components for one dataset (one weight vector)."""

    ds: Dataset  # standardized when config.standardize
    std: Standardization | None
    ps_refit: GlmFit
    ps_pen: GlmFit
    om_refit: GlmFit | None
    om_pen: GlmFit | None

    @property
    def lambdas(self):
        om = None if self.om_pen is None else self.om_pen.lam
        return self.ps_pen.lam, om


def _check_arms(ds: Dataset) -> None:
    n0, n1 = ds.arm_counts()
    if n0 == 0 or n1 == 0:
        raise EstimationError(
            f"both treatment arms must be non-empty (arm sizes {n0}, {n1})")


def normalized_ipw(y: np.ndarray, t: np.ndarray, pi_k: np.ndarray, k: int,
                   g: np.ndarray | None = None) -> float:
    """Weighted mean of ``y`` over arm ``k`` with weights ``g / pi_k``,
    normalized to sum to one; invariant to rescaling ``pi_k`` by a constant.
    """
    t = np.asarray(t)
    members = np.flatnonzero(t == k)
    if members.size == 0:
        raise EstimationError(f"arm {k} is empty")
    pi_m = np.asarray(pi_k, dtype=float)[members]
    zero = members[pi_m == 0.0]
    if zero.size:
        raise EstimationError(
            f"propensity is exactly zero for arm-{k} members at indices "
            f"{zero[:10].tolist()}")
    g = np.ones(len(t)) if g is None else np.asarray(g, dtype=float)
    w = g[members] / pi_m
    wsum = float(w.sum())
    if wsum <= 0.0:
        raise EstimationError(
            f"arm-{k} inverse-propensity weights sum to {wsum:.3g} (<= 0); "
            "negative smoothed propensities dominate, consider trimming")
    return float((w @ y[members]) / wsum)


def aipw_mu(y: np.ndarray, t: np.ndarray, pi_k: np.ndarray, m_k: np.ndarray,
            k: int, g: np.ndarray | None = None) -> float:
    """Augmented IPW mean: average of ``1{T=k}(Y - m_k)/pi_k + m_k``."""
    t = np.asarray(t)
    g = np.ones(len(t)) if g is None else np.asarray(g, dtype=float)
    ind = (t == k).astype(float)
    pi_k = np.asarray(pi_k, dtype=float)
    zero = np.flatnonzero((pi_k == 0.0) & (ind == 1.0))
    if zero.size:
        raise EstimationError(
            f"propensity is exactly zero for arm-{k} members at indices "
            f"{zero[:10].tolist()}")
    with np.errstate(divide="ignore", invalid="ignore"):
        aug = np.where(ind == 1.0, (y - m_k) / pi_k, 0.0)
    gsum = float(g.sum())
    if gsum <= 0.0:
        raise EstimationError("total observation weight is zero")
    return float((g @ (ind * aug + m_k)) / gsum)


def fit_components(ds: Dataset, config: EstimatorConfig,
                   need_outcome: bool = True, g: np.ndarray | None = None,
                   fixed_lambdas=None, warm=(None, None)) -> WorkingFits:
    """Standardize and fit the propensity and outcome working models.

    ``fixed_lambdas = (lam_ps, lam_om)`` skips tuning (resampling reuse);
    ``warm`` provides coordinate-descent warm starts for the penalized fits.
    """
    _check_arms(ds)
    if config.standardize:
        ds_std, std = standardize(ds)
    else:
        ds_std, std = ds, None
    lam_ps, lam_om = fixed_lambdas if fixed_lambdas is not None else (None, None)
    ps_refit, ps_pen = fit_working_model(
        ds_std, "treatment", BINOMIAL, gamma=config.gamma,
        ridge_lambda=config.ridge_lambda, criterion=config.criterion,
        eric_constant=config.eric_constant, g=g,
        fixed_lambda=lam_ps, warm_start=warm[0])
    om_refit = om_pen = None
    if need_outcome:
        om_refit, om_pen = fit_working_model(
            ds_std, "outcome", config.outcome_family, gamma=config.gamma,
            ridge_lambda=config.ridge_lambda, criterion=config.criterion,
            eric_constant=config.eric_constant,
            arm_specific_slopes=config.arm_specific_slopes, g=g,
            fixed_lambda=lam_om, warm_start=warm[1])
    return WorkingFits(ds=ds_std, std=std, ps_refit=ps_refit, ps_pen=ps_pen,
                       om_refit=om_refit, om_pen=om_pen)


def _trim(pi: np.ndarray, eps: float | None) -> np.ndarray:
    if eps is None:
        return pi
    return np.clip(pi, eps, 1.0 - eps)


def _weight_summary(t, pi1, pi0, g) -> dict:
    out = {}
    for k, pi in ((1, pi1), (0, pi0)):
        members = t == k
        w = g[members] / pi[members]
        out[f"arm{k}"] = {"min": float(w.min()), "max": float(w.max()),
                          "sum": float(w.sum())}
    return out


def _parametric_pi(fits: WorkingFits):
    eta = fits.ps_refit.linear_predictor(fits.ds.x)
    pi1 = expit(eta)
    return pi1, 1.0 - pi1


def _outcome_means(fits: WorkingFits):
    ds = fits.ds
    om = fits.om_refit
    ones = np.ones(ds.n, dtype=ds.t.dtype)
    m1 = om.family.mean(om.linear_predictor(ds.x, ones))
    m0 = om.family.mean(om.linear_predictor(ds.x, np.zeros_like(ones)))
    return m1, m0


def estimate_with_fits(method: str, fits: WorkingFits, config: EstimatorConfig,
                       g: np.ndarray | None = None) -> EffectEstimate:
    """Compute one estimator from already-fitted components."""
    ds = fits.ds
    g = np.ones(ds.n) if g is None else np.asarray(g, dtype=float)
    diag: dict = {
        "ps_support": list(fits.ps_refit.support_names),
        "ps_lambda": fits.ps_pen.lam,
        "om_support": (list(fits.om_refit.support_names)
                       if fits.om_refit is not None else []),
        "om_lambda": (fits.om_pen.lam if fits.om_pen is not None else None),
        "negative_ps_count": 0,
        "bandwidth": None,
        "warnings": list(fits.ps_refit.warnings)
        + (list(fits.om_refit.warnings) if fits.om_refit is not None else []),
    }

    if method == "dips":
        if fits.om_refit is None:
            raise EstimationError("dips requires the outcome working model")
        _, s1, est = build_dips(ds, fits.ps_refit, fits.om_refit,
                                h_override=config.h_override, g=g)
        pi1 = _trim(est.pi1, config.trim_ps)
        pi0 = _trim(est.pi0, config.trim_ps)
        diag["negative_ps_count"] = est.negative_count
        diag["min_abs_ps"] = est.min_abs_value
        diag["bandwidth"] = s1.bandwidth
        mu1 = normalized_ipw(ds.y, ds.t, pi1, 1, g)
        mu0 = normalized_ipw(ds.y, ds.t, pi0, 0, g)
    elif method == "ipw-alas":
        pi1, pi0 = _parametric_pi(fits)
        used1 = (ds.t == 1) & ((pi1 < _EXTREME_PROB_TOL) | (pi1 > 1 - _EXTREME_PROB_TOL))
        used0 = (ds.t == 0) & ((pi0 < _EXTREME_PROB_TOL) | (pi0 > 1 - _EXTREME_PROB_TOL))
        if bool(used1.any() or used0.any()):
            diag["warnings"].append(
                "fitted propensities within 1e-12 of 0/1 on weighted members; "
                "weights are extreme, consider trimming")
        pi1 = _trim(pi1, config.trim_ps)
        pi0 = _trim(pi0, config.trim_ps)
        mu1 = normalized_ipw(ds.y, ds.t, pi1, 1, g)
        mu0 = normalized_ipw(ds.y, ds.t, pi0, 0, g)
    elif method == "dr-alas":
        if fits.om_refit is None:
            raise EstimationError("dr-alas requires the outcome working model")
        pi1, pi0 = _parametric_pi(fits)
        pi1 = _trim(pi1, config.trim_ps)
        pi0 = _trim(pi0, config.trim_ps)
        m1, m0 = _outcome_means(fits)
        mu1 = aipw_mu(ds.y, ds.t, pi1, m1, 1, g)
        mu0 = aipw_mu(ds.y, ds.t, pi0, m0, 0, g)
    else:
        raise ValueError(f"unknown method {method!r}")

    diag["weight_summary"] = _weight_summary(ds.t, pi1, pi0, g)
    return EffectEstimate(
        method=method, delta=mu1 - mu0, mu1=mu1, mu0=mu0,
        n=ds.n, p=ds.p, diagnostics=diag)


def estimate_all(ds: Dataset, config: EstimatorConfig,
                 methods=METHODS, g: np.ndarray | None = None,
                 fixed_lambdas=None, warm=(None, None)):
    """Fit components once and evaluate each requested estimator.

    Returns ``(estimates, fits)`` with estimates keyed by method name.
    """
    methods = tuple(methods)
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}")
    need_outcome = any(m in ("dips", "dr-alas") for m in methods)
    fits = fit_components(ds, config, need_outcome=need_outcome, g=g,
                          fixed_lambdas=fixed_lambdas, warm=warm)
    estimates = {m: estimate_with_fits(m, fits, config, g=g) for m in methods}
    return estimates, fits


def estimate_dips(ds: Dataset, config: EstimatorConfig = EstimatorConfig()
                  ) -> EffectEstimate:
    """Full pipeline: standardize, fit both working models, smooth, weight."""
    return estimate_all(ds, config, methods=("dips",))[0]["dips"]


def estimate_ipw_alas(ds: Dataset, config: EstimatorConfig = EstimatorConfig()
                      ) -> EffectEstimate:
    """Normalized IPW with the parametric adaptive-LASSO propensity."""
    return estimate_all(ds, config, methods=("ipw-alas",))[0]["ipw-alas"]


def estimate_dr_alas(ds: Dataset, config: EstimatorConfig = EstimatorConfig()
                     ) -> EffectEstimate:
    """Augmented IPW with both parametric working models."""
    return estimate_all(ds, config, methods=("dr-alas",))[0]["dr-alas"]
