"""Command-line front-end: real-data estimation and simulation experiments
with reproducible seeds and machine-readable JSON/CSV output.

Exit codes: 0 success, 2 configuration error, 1 runtime error.  Error
messages go to standard error with stable prefixes CONFIG:, DATA:, and
ESTIMATION:.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .data import load_csv
from .errors import ConfigError, DataError, DipsError
from .estimators import (
    METHODS,
    EffectEstimate,
    EstimatorConfig,
    estimate_all,
)
from .glm import BINOMIAL, GAUSSIAN
from .inference import PerturbationConfig, perturbation_summary
from .simulation import SCENARIOS, ScenarioConfig, run_experiment

__all__ = ["main", "entry", "build_parser", "emit_result"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _default_threads() -> int:
    env = os.environ.get("DIPS_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dips", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate a treatment effect from a CSV")
    est.add_argument("--input", required=True, help="CSV file with header row")
    est.add_argument("--outcome", required=True, help="outcome column name")
    est.add_argument("--treatment", required=True, help="treatment column name")
    est.add_argument("--covariates", default=None,
                     help="comma-separated covariate columns (default: all others)")
    est.add_argument("--family", choices=("gaussian", "binomial"),
                     default="gaussian", help="outcome working-model family")
    est.add_argument("--method", default="dips",
                     help="comma-separated subset of dips,ipw-alas,dr-alas or 'all'")
    est.add_argument("--resamples", type=int, default=0,
                     help="perturbation resamples (0 = point estimate only)")
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--trim-ps", type=float, nargs="?", const=0.01, default=None,
                     help="clip propensities into [eps, 1-eps] for all methods")
    est.add_argument("--no-standardize", action="store_true",
                     help="skip covariate standardization before penalized fits")
    est.add_argument("--gamma", type=float, default=1.0,
                     help="adaptive-weight exponent")
    est.add_argument("--arm-specific-slopes", action="store_true",
                     help="fit the outcome slopes separately per arm")
    est.add_argument("--criterion", choices=("eric", "bic"), default="eric")
    est.add_argument("--bandwidth", type=float, default=None,
                     help="override the plug-in smoothing bandwidth")
    est.add_argument("--output", default=None, help="JSON output path (default stdout)")
    est.add_argument("--dump-resamples", default=None,
                     help="write the raw resampled estimates to this CSV")
    est.add_argument("--figures", default=None,
                     help="directory for rendered figures")
    est.add_argument("--threads", type=int, default=None)

    sim = sub.add_parser("simulate", help="run a Monte Carlo scenario cell")
    sim.add_argument("--scenario", required=True, choices=SCENARIOS)
    sim.add_argument("--n", required=True, type=int)
    sim.add_argument("--p", type=int, default=15)
    sim.add_argument("--reps", required=True, type=int)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--estimators", default="dips,ipw-alas,dr-alas",
                     help="comma-separated subset of dips,ipw-alas,dr-alas")
    sim.add_argument("--coverage", action="store_true",
                     help="run perturbation inference per rep (dips only)")
    sim.add_argument("--resamples", type=int, default=500,
                     help="perturbation resamples per rep when --coverage")
    sim.add_argument("--trim-ps", type=float, nargs="?", const=0.01, default=None)
    sim.add_argument("--output", default=None, help="JSON output path (default stdout)")
    sim.add_argument("--csv", default=None, help="flat CSV output path")
    sim.add_argument("--figures", default=None,
                     help="directory for rendered figures")
    sim.add_argument("--threads", type=int, default=None)
    return parser


def _methods_from(arg: str) -> tuple[str, ...]:
    if arg.strip() == "all":
        return METHODS
    methods = tuple(m.strip() for m in arg.split(",") if m.strip())
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown method(s) {bad}; choose from {list(METHODS)}")
    if not methods:
        raise ConfigError("no methods requested")
    return methods


def emit_result(payload: dict | list, path: str | None) -> None:
    """Write the JSON document to ``path`` or standard output."""
    text = json.dumps(payload, indent=2)
    if path is None:
        print(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")


def _estimate_payload(est: EffectEstimate, seed: int) -> dict:
    diag = est.diagnostics
    return {
        "method": est.method,
        "n": est.n,
        "p": est.p,
        "estimate": est.delta,
        "se": est.se,
        "ci": list(est.ci) if est.ci is not None else None,
        "p_value": est.p_value,
        "diagnostics": {
            "negative_ps_count": diag.get("negative_ps_count", 0),
            "bandwidth": diag.get("bandwidth"),
            "ps_support": diag.get("ps_support", []),
            "om_support": diag.get("om_support", []),
            "resample_failures": diag.get("resample_failures", 0),
            "ps_lambda": diag.get("ps_lambda"),
            "om_lambda": diag.get("om_lambda"),
            "mu1": est.mu1,
            "mu0": est.mu0,
            "warnings": diag.get("warnings", []),
        },
        "seed": seed,
        "version": __version__,
    }


def _run_estimate(args) -> int:
    covariates = "all-others"
    if args.covariates:
        covariates = [c.strip() for c in args.covariates.split(",") if c.strip()]
    methods = _methods_from(args.method)
    if args.resamples not in (0,) and args.resamples < 2:
        raise ConfigError("--resamples must be 0 or at least 2")

    ds = load_csv(args.input, args.outcome, args.treatment, covariates)
    config = EstimatorConfig(
        outcome_family=BINOMIAL if args.family == "binomial" else GAUSSIAN,
        standardize=not args.no_standardize,
        gamma=args.gamma,
        criterion=args.criterion,
        arm_specific_slopes=args.arm_specific_slopes,
        h_override=args.bandwidth,
        trim_ps=args.trim_ps,
    )
    estimates, fits = estimate_all(ds, config, methods=methods)
    summaries = {}
    if args.resamples >= 2:
        threads = args.threads if args.threads else _default_threads()
        pconf = PerturbationConfig(B=args.resamples, seed=args.seed,
                                   threads=threads)
        for m in methods:
            estimates[m], summaries[m] = perturbation_summary(
                ds, config, pconf, method=m,
                baseline=(estimates[m], fits))

    payloads = [_estimate_payload(estimates[m], args.seed) for m in methods]
    emit_result(payloads[0] if len(payloads) == 1 else payloads, args.output)

    if args.dump_resamples and summaries:
        from .report import resamples_csv

        base, ext = os.path.splitext(args.dump_resamples)
        for m, summary in summaries.items():
            path = (args.dump_resamples if len(summaries) == 1
                    else f"{base}_{m}{ext or '.csv'}")
            resamples_csv(summary, path)
    if args.figures and summaries:
        from .report import render_estimate_figures

        render_estimate_figures(summaries, args.figures)
    return 0


def _run_simulate(args) -> int:
    estimators = _methods_from(args.estimators)
    threads = args.threads if args.threads else _default_threads()
    perturb = None
    if args.coverage:
        if args.resamples < 2:
            raise ConfigError("--resamples must be at least 2 with --coverage")
        perturb = PerturbationConfig(B=args.resamples, seed=args.seed)
    cfg = ScenarioConfig(
        scenario=args.scenario, n=args.n, p=args.p, reps=args.reps,
        seed=args.seed, estimators=estimators, perturb=perturb,
        estimator_config=EstimatorConfig(trim_ps=args.trim_ps),
        threads=threads)
    report = run_experiment(cfg)
    payload = report.to_dict()
    payload["version"] = __version__
    emit_result(payload, args.output)
    if args.csv:
        from .report import sim_report_csv

        sim_report_csv(report, args.csv)
    if args.figures:
        from .report import render_sim_figures

        render_sim_figures(report, args.figures)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "estimate":
            return _run_estimate(args)
        return _run_simulate(args)
    except ConfigError as exc:
        print(f"CONFIG: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"DATA: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"DATA: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"DATA: {exc}", file=sys.stderr)
        return 1
    except DipsError as exc:
        print(f"ESTIMATION: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())
