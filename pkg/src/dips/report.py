"""Delimited and graphical run outputs: flat CSV tables for external
tooling, plus rendered summary figures saved next to them."""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .inference import ResampleSummary
from .simulation import SimReport

__all__ = [
    "sim_report_csv",
    "resamples_csv",
    "render_sim_figures",
    "render_estimate_figures",
]

_CSV_FIELDS = ["scenario", "n", "p", "reps", "seed", "estimator", "bias",
               "rmse", "emp_se", "re_vs_dr", "coverage", "ase", "failures"]


def sim_report_csv(report: SimReport, path) -> str:
    """One row per estimator, plot-ready."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=_CSV_FIELDS)
        writer.writeheader()
        for row in report.csv_rows():
            writer.writerow({k: ("" if row.get(k) is None else row.get(k))
                             for k in _CSV_FIELDS})
    return str(path)


def resamples_csv(summary: ResampleSummary, path) -> str:
    """Raw resampled estimates, one per line."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["delta_star"])
        for v in summary.resamples:
            writer.writerow([repr(float(v))])
    return str(path)


def render_sim_figures(report: SimReport, outdir) -> list[str]:
    """Bias/RMSE bars per estimator, plus relative efficiency when the
    doubly-robust comparator ran.  Returns the written paths."""
    os.makedirs(outdir, exist_ok=True)
    paths = []
    names = list(report.estimators)
    xs = np.arange(len(names))

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    width = 0.38
    bias = [report.metrics[m]["bias"] for m in names]
    rmse = [report.metrics[m]["rmse"] for m in names]
    ax.bar(xs - width / 2, bias, width, label="bias")
    ax.bar(xs + width / 2, rmse, width, label="RMSE")
    ax.axhline(0.0, color="black", lw=0.8)
    ax.set_xticks(xs, names)
    ax.set_ylabel("value")
    ax.set_title(f"{report.scenario}: n={report.n}, p={report.p}, "
                 f"R={report.reps}")
    ax.legend()
    path = os.path.join(outdir, "bias_rmse.png")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    paths.append(path)

    res = [report.metrics[m]["re_vs_dr"] for m in names]
    if any(r is not None for r in res):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        vals = [r if r is not None else np.nan for r in res]
        ax.bar(xs, vals, 0.55, color="tab:green")
        ax.axhline(1.0, color="black", lw=0.8, ls="--")
        ax.set_xticks(xs, names)
        ax.set_ylabel("MSE(dr-alas) / MSE(method)")
        ax.set_title("relative efficiency vs dr-alas")
        path = os.path.join(outdir, "relative_efficiency.png")
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)

    if report.coverage is not None and report.coverage.get("coverage") is not None:
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        cov = report.coverage
        ax.bar([0, 1], [cov["coverage"], cov["ase"] / cov["emp_se"]
                        if cov["emp_se"] else np.nan], 0.5, color="tab:blue")
        ax.axhline(0.95, color="black", lw=0.8, ls="--")
        ax.set_xticks([0, 1], ["coverage", "ASE / EmpSE"])
        ax.set_title(f"interval calibration (B={cov['B']})")
        path = os.path.join(outdir, "coverage.png")
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths


def render_estimate_figures(summaries: dict[str, ResampleSummary],
                            outdir) -> list[str]:
    """Histogram of resampled estimates with the point estimate and
    percentile interval marked, one figure per method."""
    os.makedirs(outdir, exist_ok=True)
    paths = []
    for method, summary in summaries.items():
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        ax.hist(summary.resamples, bins=40, color="tab:gray", alpha=0.8)
        ax.axvline(summary.delta_hat, color="tab:red", lw=1.5,
                   label="estimate")
        lo, hi = summary.ci_percentile
        ax.axvline(lo, color="tab:blue", lw=1.0, ls="--", label="95% CI")
        ax.axvline(hi, color="tab:blue", lw=1.0, ls="--")
        ax.set_xlabel("resampled estimate")
        ax.set_ylabel("count")
        ax.set_title(f"{method}: perturbation resamples (B={len(summary.resamples)})")
        ax.legend()
        path = os.path.join(outdir, f"resamples_{method}.png")
        fig.tight_layout()
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths
