"""Monte Carlo engine: four data-generating scenarios crossing correct and
misspecified working models, repetition studies over the estimators, and
aggregation of bias, RMSE, relative efficiency, and interval coverage.

The generating process draws correlated normal covariates, assigns
treatment from a logistic (or quadratic double-index) propensity, and adds
treatment effect 1 to a linear (or signed-cube-root) outcome surface with
noise SD 10.  Coefficient templates occupy the ten leading covariates.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import expit

from .data import Dataset
from .errors import DipsError
from .estimators import METHODS, EstimatorConfig, estimate_all
from .inference import PerturbationConfig, perturbation_summary

__all__ = [
    "SCENARIOS",
    "ScenarioConfig",
    "SimReport",
    "build_sigma",
    "signed_cbrt",
    "true_pi1",
    "true_mu",
    "gen_scenario",
    "run_experiment",
]

SCENARIOS = ("both-correct", "misspec-outcome", "misspec-ps", "both-misspec")

# leading-coordinate coefficient templates (zero beyond the tenth entry)
ALPHA_PS = np.array([0.4, -0.3, 0.4, 0.3, 0.3, 0.4, 0.3, -0.3, -0.3, -0.3])
BETA_OM = np.array([-1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0, 1.0, -1.0, -1.0])
ALPHA1_PS = np.array([0.9, 0.0, -0.9, 0.0, 0.9, 0.0, 0.9, 0.0, -0.9, 0.0])
ALPHA2_PS = np.array([0.0, -0.6, 0.0, 0.6, 0.0, 0.6, 0.0, -0.6, 0.0, -0.6])

TRUE_EFFECT = 1.0
# Noise scale consistent with the benchmark bias/RMSE tables (outcome
# variance 10): the displayed "SD 10" cannot reproduce them at any n.
OUTCOME_SD = float(np.sqrt(10.0))


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation cell: scenario, sizes, repetitions, estimators."""

    scenario: str
    n: int
    p: int = 15
    reps: int = 500
    seed: int = 0
    estimators: tuple[str, ...] = METHODS
    perturb: PerturbationConfig | None = None
    estimator_config: EstimatorConfig = field(default_factory=EstimatorConfig)
    threads: int = 1
    max_failure_rate: float = 0.05

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if self.p < 10:
            raise ValueError("coefficient templates occupy 10 leading slots; "
                             "need p >= 10")
        if self.reps < 1:
            raise ValueError("need reps >= 1")
        bad = [m for m in self.estimators if m not in METHODS]
        if bad:
            raise ValueError(f"unknown estimators {bad}")
        object.__setattr__(self, "estimators", tuple(self.estimators))


def build_sigma(p: int) -> np.ndarray:
    """Banded covariance: unit diagonal, 0.4 * 0.5^(|i-j|/3) within band 15."""
    if p < 1:
        raise ValueError("need p >= 1")
    idx = np.arange(p)
    dist = np.abs(idx[:, None] - idx[None, :]).astype(float)
    sigma = 0.4 * 0.5 ** (dist / 3.0) * (dist <= 15)
    np.fill_diagonal(sigma, 1.0)
    return sigma


@lru_cache(maxsize=8)
def _cholesky(p: int) -> np.ndarray:
    sigma = build_sigma(p)
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:  # not expected for this family
        raise ValueError(f"covariance for p={p} is not positive definite") from exc


def signed_cbrt(x) -> np.ndarray:
    """Real cube root preserving sign (the outcome surface needs it for
    negative bases)."""
    return np.cbrt(x)


def _pad(template: np.ndarray, p: int) -> np.ndarray:
    out = np.zeros(p)
    out[: len(template)] = template
    return out


def true_pi1(x: np.ndarray, scenario: str) -> np.ndarray:
    """Treatment probability surface for a scenario."""
    p = x.shape[1]
    if scenario in ("both-correct", "misspec-outcome"):
        return expit(x @ _pad(ALPHA_PS, p))
    u1 = x @ _pad(ALPHA1_PS, p)
    u2 = x @ _pad(ALPHA2_PS, p)
    return expit(-1.0 + u1 * (0.5 * u2 + 0.5))


def true_mu(x: np.ndarray, k: int, scenario: str) -> np.ndarray:
    """Mean outcome surface for arm ``k``; the treatment enters additively,
    so the effect is exactly 1 in every scenario."""
    b = x @ _pad(BETA_OM, x.shape[1])
    if scenario in ("both-correct", "misspec-ps"):
        return k + b
    return k + 3.0 * signed_cbrt(b * (b + 3.0))


def gen_scenario(cfg: ScenarioConfig, rep_index: int) -> tuple[Dataset, float]:
    """Generate one repetition's dataset from a private RNG stream."""
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, rep_index)))
    L = _cholesky(cfg.p)
    x = rng.standard_normal((cfg.n, cfg.p)) @ L.T
    pi1 = true_pi1(x, cfg.scenario)
    t = (rng.random(cfg.n) < pi1).astype(np.int64)
    mu = true_mu(x, 0, cfg.scenario) + t  # +k with k = t
    y = mu + OUTCOME_SD * rng.standard_normal(cfg.n)
    names = tuple(f"X{j + 1}" for j in range(cfg.p))
    return Dataset(y=y, t=t, x=x, names=names), TRUE_EFFECT


def _perturb_seed(cfg: ScenarioConfig, rep_index: int) -> int:
    ss = np.random.SeedSequence((cfg.seed, rep_index, 1))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _run_rep(args) -> dict:
    cfg, rep = args
    out: dict = {"rep": rep}
    try:
        ds, _ = gen_scenario(cfg, rep)
    except DipsError as exc:
        out["generation_error"] = str(exc)
        return out
    try:
        estimates, fits = estimate_all(ds, cfg.estimator_config,
                                       methods=cfg.estimators)
    except DipsError as exc:
        out["fit_error"] = str(exc)
        return out
    out["delta"] = {m: estimates[m].delta for m in cfg.estimators}
    if cfg.perturb is not None and "dips" in cfg.estimators:
        pconf = PerturbationConfig(
            B=cfg.perturb.B, weight_law=cfg.perturb.weight_law,
            seed=_perturb_seed(cfg, rep), reuse_lambda=cfg.perturb.reuse_lambda,
            max_failure_rate=cfg.perturb.max_failure_rate, threads=1)
        try:
            est, summary = perturbation_summary(
                ds, cfg.estimator_config, pconf, method="dips",
                baseline=(estimates["dips"], fits))
            out["perturb"] = {
                "se_mad": summary.se_mad,
                "ci": list(summary.ci_percentile),
                "covered": bool(summary.ci_percentile[0] <= TRUE_EFFECT
                                <= summary.ci_percentile[1]),
                "failures": summary.failures,
            }
        except DipsError as exc:
            out["perturb_error"] = str(exc)
    return out


@dataclass(frozen=True)
class SimReport:
    """Aggregated Monte Carlo metrics for one simulation cell."""

    scenario: str
    n: int
    p: int
    reps: int
    seed: int
    estimators: tuple[str, ...]
    metrics: dict
    coverage: dict | None
    failures: dict
    wall_clock_s: float

    def to_dict(self, include_wall_clock: bool = True) -> dict:
        out = {
            "scenario": self.scenario,
            "n": self.n,
            "p": self.p,
            "reps": self.reps,
            "seed": self.seed,
            "estimators": list(self.estimators),
            "metrics": self.metrics,
            "coverage": self.coverage,
            "failures": self.failures,
        }
        if include_wall_clock:
            out["wall_clock_s"] = self.wall_clock_s
        return out

    def to_json(self, include_wall_clock: bool = True, **kwargs) -> str:
        return json.dumps(self.to_dict(include_wall_clock), **kwargs)

    def csv_rows(self) -> list[dict]:
        rows = []
        for m in self.estimators:
            cell = self.metrics[m]
            row = {
                "scenario": self.scenario, "n": self.n, "p": self.p,
                "reps": self.reps, "seed": self.seed, "estimator": m,
                "bias": cell["bias"], "rmse": cell["rmse"],
                "emp_se": cell["emp_se"], "re_vs_dr": cell["re_vs_dr"],
                "failures": self.failures.get(m, 0),
                "coverage": (self.coverage or {}).get("coverage")
                if m == "dips" else None,
                "ase": (self.coverage or {}).get("ase") if m == "dips" else None,
            }
            rows.append(row)
        return rows


def run_experiment(cfg: ScenarioConfig) -> SimReport:
    """Run the repetition study for one cell.

    Per-rep RNG streams derive from (seed, rep_index), and aggregation is
    a deterministic reduction in rep order, so the report is bit-identical
    for any worker count.  Per-rep estimator failures are recorded, and
    the run aborts only if more than ``max_failure_rate`` of reps fail.
    """
    t0 = time.perf_counter()
    jobs = [(cfg, rep) for rep in range(cfg.reps)]
    if cfg.threads > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(_run_rep, jobs, chunksize=1))
    else:
        results = [_run_rep(job) for job in jobs]
    results.sort(key=lambda r: r["rep"])

    deltas = {m: [] for m in cfg.estimators}
    failures = {m: 0 for m in cfg.estimators}
    cover_flags, ases, perturb_failures = [], [], 0
    for res in results:
        if "delta" in res:
            for m in cfg.estimators:
                deltas[m].append(res["delta"][m])
        else:
            for m in cfg.estimators:
                failures[m] += 1
        if cfg.perturb is not None:
            if "perturb" in res:
                cover_flags.append(res["perturb"]["covered"])
                ases.append(res["perturb"]["se_mad"])
            elif "delta" in res:
                perturb_failures += 1

    for m in cfg.estimators:
        if failures[m] > cfg.max_failure_rate * cfg.reps:
            raise DipsError(
                f"estimator {m} failed in {failures[m]} of {cfg.reps} reps")

    metrics = {}
    mse = {}
    for m in cfg.estimators:
        vals = np.asarray(deltas[m])
        r = len(vals)
        bias = float(vals.mean() - TRUE_EFFECT) if r else float("nan")
        emp_se = float(vals.std(ddof=1)) if r > 1 else 0.0
        rmse = float(np.sqrt(np.mean((vals - TRUE_EFFECT) ** 2))) if r else float("nan")
        mse[m] = rmse ** 2
        metrics[m] = {"bias": bias, "rmse": rmse, "emp_se": emp_se,
                      "reps_used": r, "re_vs_dr": None}
    if "dr-alas" in cfg.estimators:
        for m in cfg.estimators:
            metrics[m]["re_vs_dr"] = (mse["dr-alas"] / mse[m]
                                      if mse[m] > 0 else None)

    coverage = None
    if cfg.perturb is not None and "dips" in cfg.estimators:
        coverage = {
            "coverage": float(np.mean(cover_flags)) if cover_flags else None,
            "ase": float(np.mean(ases)) if ases else None,
            "emp_se": metrics["dips"]["emp_se"],
            "reps_used": len(cover_flags),
            "perturb_failures": perturb_failures,
            "B": cfg.perturb.B,
        }

    return SimReport(
        scenario=cfg.scenario, n=cfg.n, p=cfg.p, reps=cfg.reps, seed=cfg.seed,
        estimators=cfg.estimators, metrics=metrics, coverage=coverage,
        failures=failures, wall_clock_s=time.perf_counter() - t0)
