"""Double-index propensity calibration: per-arm scores from the fitted
working models are transformed to a common scale and treatment status is
smoothed over them with a fourth-order Gaussian product kernel.

The smoother is the V-statistic ratio

    pi_k(s) = sum_j K_h(S_j - s) 1{T_j = k} G_j / sum_j K_h(S_j - s) G_j

summed over all j (the evaluation point's own term included).  The
fourth-order kernel trades nonnegativity for bias reduction, so smoothed
values may fall outside [0, 1]; they are tracked, not clipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .data import Dataset
from .errors import DegenerateScoreError, SmoothingDegeneracyError
from .glm import GlmFit

__all__ = [
    "DoubleIndexScores",
    "PropensityEstimates",
    "kernel_q4",
    "kernel_q4_1d",
    "transform_scores",
    "plugin_bandwidth",
    "dips_pi",
    "build_dips",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_SD_TOL = 1e-12
_DENOM_TOL = 1e-300
_EVAL_CHUNK = 256
# sample SD of a Uniform(0,1) column, the transform's target scale
_UNIFORM_SD = 1.0 / math.sqrt(12.0)


@dataclass(frozen=True)
class DoubleIndexScores:
    """Per-arm smoothing inputs: raw indices, transformed matrix, bandwidth.

    ``live`` names the columns that survived the zero-variance check, in
    the order they appear in ``transformed`` ("ps" then "om").
    """

    arm: int
    s_alpha: np.ndarray
    s_beta: np.ndarray
    transformed: np.ndarray
    bandwidth: float
    live: tuple[str, ...]


@dataclass(frozen=True)
class PropensityEstimates:
    """Smoothed per-arm propensities at the sample points."""

    pi1: np.ndarray
    pi0: np.ndarray
    negative_count: int
    min_abs_value: float


def kernel_q4_1d(u) -> np.ndarray:
    """Fourth-order Gaussian-based kernel (3 - u^2) phi(u) / 2."""
    u = np.asarray(u, dtype=float)
    return 0.5 * (3.0 - u * u) * _INV_SQRT_2PI * np.exp(-0.5 * u * u)


def kernel_q4(u1, u2=None) -> np.ndarray:
    """Bivariate product kernel K(u1, u2) = k4(u1) k4(u2).

    Accepts either a length-2 vector or the two components separately.
    """
    if u2 is None:
        u1 = np.asarray(u1, dtype=float)
        u1, u2 = u1[..., 0], u1[..., 1]
    return kernel_q4_1d(u1) * kernel_q4_1d(u2)


def transform_scores(raw: np.ndarray) -> np.ndarray:
    """Probability-integral transform of standardized scores.

    Returns ``Phi((raw - mean) / sd)``: strictly monotone, values in
    (0, 1), invariant to increasing affine maps of ``raw``.
    """
    raw = np.asarray(raw, dtype=float)
    mean = raw.mean()
    sd = raw.std(ddof=1)
    if sd <= _SD_TOL * (1.0 + abs(mean)):
        raise DegenerateScoreError("score column has zero sample variance")
    return ndtr((raw - mean) / sd)


def plugin_bandwidth(n: int, q: int = 4, sigma: float = 1.0) -> float:
    """Plug-in bandwidth sigma * n^(-1/(q+2)) at the optimal rate."""
    if n < 2:
        raise ValueError("need n >= 2")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return sigma * float(n) ** (-1.0 / (q + 2))


def _kernel_weight_sums(eval_pts, data_pts, h, weight_vectors):
    """Sums ``sum_j prod_d k4((S_jd - s_d)/h) w_j`` for each weight vector.

    Chunked over evaluation rows; exact O(m n) summation, no binning.
    """
    eval_pts = np.atleast_2d(np.asarray(eval_pts, dtype=float))
    data_pts = np.atleast_2d(np.asarray(data_pts, dtype=float))
    m, d = eval_pts.shape
    outs = [np.empty(m) for _ in weight_vectors]
    const = (0.5 * _INV_SQRT_2PI) ** d
    for lo in range(0, m, _EVAL_CHUNK):
        hi = min(lo + _EVAL_CHUNK, m)
        u = (data_pts[None, :, :] - eval_pts[lo:hi, None, :]) / h
        usq = u * u
        # product of per-dimension kernels with the exponentials fused
        poly = 3.0 - usq[:, :, 0]
        ssq = usq[:, :, 0]
        for j in range(1, d):
            poly = poly * (3.0 - usq[:, :, j])
            ssq = ssq + usq[:, :, j]
        K = const * poly * np.exp(-0.5 * ssq)
        for out, w in zip(outs, weight_vectors):
            out[lo:hi] = K @ w
    return outs


def dips_pi(eval_scores, data_scores, t: np.ndarray, k: int, h: float,
            g: np.ndarray | None = None) -> np.ndarray:
    """Smoothed probability of arm ``k`` at each evaluation score.

    Both score matrices must be on the same (transformed) scale.  The sum
    runs over every data point, including an evaluation point's own row
    when the scores coincide.
    """
    if h <= 0:
        raise ValueError("bandwidth must be positive")
    t = np.asarray(t)
    n = len(t)
    g = np.ones(n) if g is None else np.asarray(g, dtype=float)
    ind = (t == k).astype(float) * g
    denom, num = _kernel_weight_sums(eval_scores, data_scores, h, [g, ind])
    d = np.atleast_2d(np.asarray(eval_scores, dtype=float)).shape[1]
    scale = h ** (-d) / n
    bad = np.abs(denom * scale) < _DENOM_TOL
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise SmoothingDegeneracyError(
            f"kernel denominator underflow at evaluation point {i}")
    return num / denom


def _live_columns(cols: list[np.ndarray], labels: list[str]):
    live_cols, live_labels = [], []
    for col, label in zip(cols, labels):
        sd = col.std(ddof=1)
        if sd > _SD_TOL * (1.0 + abs(col.mean())):
            live_cols.append(col)
            live_labels.append(label)
    return live_cols, tuple(live_labels)


def build_dips(ds: Dataset, ps_fit: GlmFit, om_fit: GlmFit,
               h_override: float | None = None, g: np.ndarray | None = None,
               ) -> tuple[DoubleIndexScores, DoubleIndexScores, PropensityEstimates]:
    """Assemble per-arm double-index scores and smoothed propensities.

    Scores are the slope-only linear predictors from the two working-model
    fits.  Each surviving column is standardized and mapped through the
    normal CDF; a zero-variance column (null working model) drops out and
    smoothing falls back to one dimension, or to the weighted arm share
    when both columns are degenerate.  One common plug-in bandwidth serves
    all components unless overridden.

    Returns ``(scores_arm0, scores_arm1, estimates)``.
    """
    n = ds.n
    g = np.ones(n) if g is None else np.asarray(g, dtype=float)
    s_alpha = ps_fit.index_scores(ds.x, 1)
    s_beta = {k: om_fit.index_scores(ds.x, k) for k in (0, 1)}

    live, transformed = {}, {}
    for k in (0, 1):
        cols, labels = _live_columns([s_alpha, s_beta[k]], ["ps", "om"])
        live[k] = labels
        transformed[k] = (np.column_stack([transform_scores(c) for c in cols])
                          if cols else np.empty((n, 0)))

    # one common bandwidth from the pooled SD of the distinct live columns
    unique_cols = []
    if "ps" in live[1]:
        unique_cols.append(transformed[1][:, live[1].index("ps")])
    om_arms = (0, 1) if om_fit.arm_specific else (1,)
    for k in om_arms:
        if "om" in live[k]:
            unique_cols.append(transformed[k][:, live[k].index("om")])
    if h_override is not None:
        if h_override <= 0:
            raise ValueError("bandwidth override must be positive")
        h = float(h_override)
    else:
        # root of the average per-column variance; per-column centering
        # keeps the scale invariant under reflections of any one score
        sigma = (float(np.sqrt(np.mean([np.var(c, ddof=1) for c in unique_cols])))
                 if unique_cols else _UNIFORM_SD)
        h = plugin_bandwidth(n, 4, sigma if sigma > 0 else _UNIFORM_SD)

    shared = not om_fit.arm_specific
    if transformed[1].shape[1] == 0 and transformed[0].shape[1] == 0:
        share1 = float((g * (ds.t == 1)).sum() / g.sum())
        pi1 = np.full(n, share1)
        pi0 = 1.0 - pi1
    elif shared:
        pts = transformed[1]
        gsum, num1 = _kernel_weight_sums(pts, pts, h,
                                         [g, (ds.t == 1).astype(float) * g])
        scale = h ** (-pts.shape[1]) / n
        bad = np.abs(gsum * scale) < _DENOM_TOL
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise SmoothingDegeneracyError(
                f"kernel denominator underflow at evaluation point {i}")
        pi1 = num1 / gsum
        pi0 = (gsum - num1) / gsum
    else:
        pi = {}
        for k in (0, 1):
            pts = transformed[k]
            if pts.shape[1] == 0:
                share = float((g * (ds.t == k)).sum() / g.sum())
                pi[k] = np.full(n, share)
            else:
                pi[k] = dips_pi(pts, pts, ds.t, k, h, g=g)
        pi1, pi0 = pi[1], pi[0]

    negative = int((pi1 < 0).sum() + (pi0 < 0).sum())
    min_abs = float(min(np.min(np.abs(pi1)), np.min(np.abs(pi0))))
    est = PropensityEstimates(pi1=pi1, pi0=pi0, negative_count=negative,
                              min_abs_value=min_abs)
    scores = tuple(
        DoubleIndexScores(arm=k, s_alpha=s_alpha, s_beta=s_beta[k],
                          transformed=transformed[k], bandwidth=h,
                          live=live[k])
        for k in (0, 1)
    )
    return scores[0], scores[1], est
