"""Penalized working models: ridge initial fits, adaptive-LASSO coordinate
descent, information-criterion tuning, and unpenalized refits on the
selected support.

Conventions
-----------
All fits expect a standardized covariate matrix.  The smooth loss is the
negative mean log-likelihood, with the gaussian case using the unit-variance
convention ``loss(b) = sum(g * (y - eta)^2) / (2n)`` so that coordinate
updates reduce to soft-thresholding of ``rho = z_j' (g * r) / n``.
Intercepts (and the treatment main effect in the outcome model) are never
penalized.  Observation weights ``g`` default to ones; every solver is
written in weighted form so resampling reuses the exact same code path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import Dataset
from .errors import SolverError

__all__ = [
    "Family",
    "GAUSSIAN",
    "BINOMIAL",
    "GlmFit",
    "fit_ridge",
    "fit_adaptive_lasso",
    "select_lambda",
    "refit_on_support",
    "fit_working_model",
    "kkt_violation",
    "refit_gradient_norm",
]

_CD_TOL = 1e-8
_CD_MAX_SWEEPS = 1000
_IRLS_MAX_OUTER = 100
_PROB_FLOOR = 1e-10
_REFIT_GRAD_TOL = 1e-10
_STABILIZE_RIDGE = 1e-6


@dataclass(frozen=True)
class Family:
    """GLM family with its canonical link."""

    kind: str  # "gaussian" (identity link) or "binomial" (logit link)

    def __post_init__(self):
        if self.kind not in ("gaussian", "binomial"):
            raise ValueError(f"unknown family {self.kind!r}")

    def mean(self, eta: np.ndarray) -> np.ndarray:
        return eta if self.kind == "gaussian" else expit(eta)

    def check_response(self, y: np.ndarray) -> None:
        if self.kind == "binomial" and not np.all(np.isin(y, (0, 1))):
            raise ValueError("binomial family requires responses in {0,1}")
        if not np.all(np.isfinite(y)):
            raise ValueError("responses must be finite")


GAUSSIAN = Family("gaussian")
BINOMIAL = Family("binomial")


@dataclass(frozen=True)
class GlmFit:
    """Result of a penalized or refit working-model regression.

    ``intercepts`` is ``(a0,)`` for the treatment model and ``(b0, b1)``
    for the outcome model (``b1`` multiplies the treatment indicator).
    ``coefficients`` has shape ``(p,)``, or ``(2, p)`` when slopes are fit
    separately by arm.  Coefficients outside ``support`` are exactly zero.
    """

    family: Family
    response: str
    intercepts: tuple[float, ...]
    coefficients: np.ndarray
    support: tuple[int, ...]
    support_names: tuple[str, ...]
    lam: float | tuple[float, float]
    eric_trace: tuple[tuple[float, float, int], ...] = ()
    refit: bool = False
    arm_specific: bool = False
    warnings: tuple[str, ...] = ()

    def slopes(self, arm: int) -> np.ndarray:
        return self.coefficients[arm] if self.arm_specific else self.coefficients

    def linear_predictor(self, x: np.ndarray, t: np.ndarray | None = None) -> np.ndarray:
        """Full linear predictor including intercepts (and treatment term)."""
        if self.response == "treatment":
            return self.intercepts[0] + x @ self.coefficients
        if t is None:
            raise ValueError("outcome model needs the treatment vector")
        b0, b1 = self.intercepts
        if self.arm_specific:
            eta = np.where(t == 1, x @ self.coefficients[1], x @ self.coefficients[0])
        else:
            eta = x @ self.coefficients
        return b0 + b1 * t + eta

    def index_scores(self, x: np.ndarray, arm: int) -> np.ndarray:
        """Slope-only index used for smoothing (intercepts drop out)."""
        return x @ self.slopes(arm)

    def to_dict(self) -> dict:
        return {
            "response": self.response,
            "family": self.family.kind,
            "intercepts": [float(v) for v in self.intercepts],
            "coefficients": np.asarray(self.coefficients).tolist(),
            "support": list(self.support),
            "support_names": list(self.support_names),
            "lambda": self.lam if isinstance(self.lam, float) else list(self.lam),
            "refit": self.refit,
            "arm_specific": self.arm_specific,
            "criterion_trace": [
                {"lambda": l, "criterion": c, "support_size": s}
                for l, c, s in self.eric_trace
            ],
            "warnings": list(self.warnings),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


# ---------------------------------------------------------------------------
# design assembly
# ---------------------------------------------------------------------------


def _design(ds: Dataset, response: str):
    """Return (Z, y, n_unpen) with unpenalized columns leading.

    Roles: "treatment" fits T on [1, X]; "outcome" fits Y on [1, T, X];
    "outcome-single-arm" fits Y on [1, X] (caller pre-restricts the rows).
    """
    n = ds.n
    if response == "treatment":
        return np.column_stack([np.ones(n), ds.x]), ds.t.astype(float), 1
    if response == "outcome":
        return np.column_stack([np.ones(n), ds.t.astype(float), ds.x]), ds.y, 2
    if response == "outcome-single-arm":
        return np.column_stack([np.ones(n), ds.x]), ds.y, 1
    raise ValueError(f"unknown response role {response!r}")


def _as_weights(g, n: int) -> np.ndarray:
    if g is None:
        return np.ones(n)
    g = np.asarray(g, dtype=float)
    if g.shape != (n,) or np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValueError("observation weights must be nonnegative, finite, length n")
    return g


# ---------------------------------------------------------------------------
# smooth loss pieces
# ---------------------------------------------------------------------------


def _smooth_loss(Z, y, b, family: Family, g) -> float:
    eta = Z @ b
    n = len(y)
    if family.kind == "gaussian":
        r = y - eta
        return 0.5 * float(g @ (r * r)) / n
    ll = np.logaddexp(0.0, eta) - y * eta
    return float(g @ ll) / n


def _logit_parts(eta, y):
    """Sign-symmetric pieces of the logistic score: residual ``u`` equals
    ``y - p`` and ``var`` equals ``p (1 - p)``, but computed so that
    flipping the labels (y -> 1-y, eta -> -eta) negates ``u`` and leaves
    ``var`` bit-identical."""
    p = expit(eta)
    q = expit(-eta)
    u = np.where(y == 1.0, q, -p)
    return p, q, u, p * q


def _smooth_grad(Z, y, b, family: Family, g) -> np.ndarray:
    eta = Z @ b
    if family.kind == "gaussian":
        return Z.T @ (g * (eta - y)) / len(y)
    _, _, u, _ = _logit_parts(eta, y)
    return -(Z.T @ (g * u)) / len(y)


def _profile_loglik(y, eta, family: Family, g) -> float:
    """Weighted log-likelihood with gaussian dispersion profiled out."""
    n = len(y)
    if family.kind == "gaussian":
        rss = float(g @ ((y - eta) ** 2))
        sigma2 = max(rss / n, 1e-300)
        return -0.5 * n * (math.log(2.0 * math.pi * sigma2) + 1.0)
    return float(g @ (y * eta - np.logaddexp(0.0, eta)))


# ---------------------------------------------------------------------------
# coordinate descent core
# ---------------------------------------------------------------------------


def _cd_gaussian(Z, y, thresholds, g, b0, tol, max_sweeps):
    """Weighted-least-squares coordinate descent with per-column soft
    thresholds (0 for unpenalized columns, inf forces a zero coefficient).

    The penalized objective is non-increasing across sweeps by exact
    coordinate minimization; asserted with a small float-noise allowance.
    """
    n, m = Z.shape
    b = np.zeros(m) if b0 is None else b0.copy()
    forced = ~np.isfinite(thresholds)
    if np.any(forced & (b != 0.0)):
        b[forced] = 0.0
    gZ = g[:, None] * Z
    col_sq = np.einsum("ij,ij->j", gZ, Z) / n
    r = y - Z @ b
    fin = np.isfinite(thresholds)

    def objective():
        pen = float(np.sum(thresholds[fin] * np.abs(b[fin])))
        return 0.5 * float(g @ (r * r)) / n + pen

    prev = objective()
    for _ in range(max_sweeps):
        max_change = 0.0
        for j in range(m):
            if forced[j] or col_sq[j] <= 0.0:
                continue
            bj = b[j]
            rho = float(gZ[:, j] @ r) / n + col_sq[j] * bj
            th = thresholds[j]
            if th > 0.0:
                new = math.copysign(max(abs(rho) - th, 0.0), rho) / col_sq[j]
            else:
                new = rho / col_sq[j]
            if new != bj:
                r -= Z[:, j] * (new - bj)
                b[j] = new
                max_change = max(max_change, abs(new - bj))
        obj = objective()
        assert obj <= prev + 1e-9 * (1.0 + abs(prev)), \
            "coordinate sweep increased the objective"
        prev = obj
        if max_change < tol:
            break
    return b


def _penalized_objective(Z, y, b, family, g, thresholds):
    fin = np.isfinite(thresholds)
    if np.any(~fin & (b != 0.0)):
        return math.inf
    pen = float(np.sum(thresholds[fin] * np.abs(b[fin])))
    return _smooth_loss(Z, y, b, family, g) + pen


def _cd_solve(Z, y, family, thresholds, g, b0=None,
              tol=_CD_TOL, max_sweeps=_CD_MAX_SWEEPS):
    """Penalized fit: plain coordinate descent (gaussian) or IRLS wrapping
    coordinate descent with step-halving on the true objective (binomial).

    Returns (coefficients, warnings).
    """
    warns: list[str] = []
    if family.kind == "gaussian":
        return _cd_gaussian(Z, y, thresholds, g, b0, tol, max_sweeps), warns

    m = Z.shape[1]
    b = np.zeros(m) if b0 is None else b0.copy()
    b[~np.isfinite(thresholds)] = 0.0
    obj = _penalized_objective(Z, y, b, family, g, thresholds)
    stabilized = False
    for _ in range(_IRLS_MAX_OUTER):
        eta = Z @ b
        _, _, u, var = _logit_parts(eta, y)
        if np.any(var < _PROB_FLOOR) and not stabilized:
            warns.append(
                "binomial working weights degenerate (fitted probabilities "
                "pinned at 0/1); ridge-stabilized quadratic applied"
            )
            stabilized = True
        var_f = np.maximum(var, _PROB_FLOOR)
        w_quad = g * var_f
        if stabilized:
            w_quad = w_quad + _STABILIZE_RIDGE
        zresp = eta + u / var_f
        b_new = _cd_gaussian(Z, zresp, thresholds, w_quad, b, tol, 200)
        step, cand = 1.0, b_new
        cand_obj = _penalized_objective(Z, y, cand, family, g, thresholds)
        while cand_obj > obj + 1e-12 and step > 1e-4:
            step *= 0.5
            cand = b + step * (b_new - b)
            cand_obj = _penalized_objective(Z, y, cand, family, g, thresholds)
        if cand_obj > obj + 1e-12:
            raise SolverError("penalized IRLS failed to decrease the objective",
                              last_objective=obj)
        change = float(np.max(np.abs(cand - b)))
        decrease = obj - cand_obj
        b, obj = cand, cand_obj
        if change < tol:
            return b, warns
        # flat valley (pinned probabilities drifting along a separated
        # direction): the objective is effectively minimized
        if decrease < 1e-12 * (1.0 + abs(obj)):
            return b, warns
    raise SolverError("penalized IRLS did not converge", last_objective=obj)


# ---------------------------------------------------------------------------
# ridge initial weights
# ---------------------------------------------------------------------------


def _ridge_solve(Z, y, family, ridge_lambda, n_unpen, g):
    """Full ridge coefficient vector with unpenalized leading columns."""
    n, m = Z.shape
    pen_mask = np.zeros(m)
    pen_mask[n_unpen:] = 1.0
    if family.kind == "gaussian":
        A = (Z.T * g) @ Z / n + ridge_lambda * np.diag(pen_mask)
        return np.linalg.solve(A, Z.T @ (g * y) / n)

    def objective(bv):
        return _smooth_loss(Z, y, bv, family, g) + 0.5 * ridge_lambda * float(
            (pen_mask * bv) @ bv)

    def gradient(bv):
        _, _, u, _ = _logit_parts(Z @ bv, y)
        return -(Z.T @ (g * u)) / n + ridge_lambda * pen_mask * bv

    b = np.zeros(m)
    obj = objective(b)
    for _ in range(200):
        grad = gradient(b)
        if float(np.max(np.abs(grad))) < _REFIT_GRAD_TOL:
            return b
        _, _, _, var = _logit_parts(Z @ b, y)
        w = g * np.maximum(var, _PROB_FLOOR)
        H = (Z.T * w) @ Z / n + ridge_lambda * np.diag(pen_mask)
        try:
            delta = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"ridge Newton step failed: {exc}",
                              last_objective=obj) from exc
        step = 1.0
        cand = b - delta
        cand_obj = objective(cand)
        while cand_obj > obj + 1e-14 and step > 1e-8:
            step *= 0.5
            cand = b - step * delta
            cand_obj = objective(cand)
        b, obj = cand, cand_obj
    if float(np.max(np.abs(gradient(b)))) < 1e-6:
        return b
    raise SolverError("ridge IRLS did not converge", last_objective=obj)


def fit_ridge(ds: Dataset, response: str, family: Family,
              ridge_lambda: float, g=None) -> np.ndarray:
    """Ridge-penalized fit used for adaptive-LASSO initial weights.

    Minimizes ``smooth_loss + ridge_lambda * ||slopes||^2 / 2`` with
    unpenalized intercept (and treatment main effect for the outcome
    model).  Returns the covariate slope vector only.
    """
    if ridge_lambda <= 0:
        raise ValueError("ridge_lambda must be positive")
    Z, y, n_unpen = _design(ds, response)
    family.check_response(y)
    g = _as_weights(g, len(y))
    return _ridge_solve(Z, y, family, ridge_lambda, n_unpen, g)[n_unpen:]


# ---------------------------------------------------------------------------
# adaptive LASSO
# ---------------------------------------------------------------------------


def _thresholds_from(ridge_coefs, gamma, lam, n_unpen) -> np.ndarray:
    """Per-column soft thresholds lambda / |w|^gamma (0 for unpenalized
    columns; a zero initial weight forces the coefficient to zero)."""
    w = np.abs(np.asarray(ridge_coefs, dtype=float)) ** gamma
    pen = np.where(w > 0.0, lam / np.where(w > 0.0, w, 1.0), np.inf)
    return np.concatenate([np.zeros(n_unpen), pen])


def _make_fit(ds, response, family, b, n_unpen, lam, trace=(), refit=False,
              warnings=()) -> GlmFit:
    slopes = b[n_unpen:]
    support = tuple(int(j) for j in np.flatnonzero(slopes != 0.0))
    return GlmFit(
        family=family,
        response=response,
        intercepts=tuple(float(v) for v in b[:n_unpen]),
        coefficients=slopes.copy(),
        support=support,
        support_names=tuple(ds.names[j] for j in support),
        lam=lam,
        eric_trace=tuple(trace),
        refit=refit,
        arm_specific=False,
        warnings=tuple(warnings),
    )


def fit_adaptive_lasso(ds: Dataset, response: str, family: Family,
                       ridge_coefs: np.ndarray, gamma: float = 1.0,
                       lam: float = 0.0, arm_specific_slopes: bool = False,
                       g=None, start: np.ndarray | None = None) -> GlmFit:
    """Adaptive-LASSO fit: smooth loss plus ``lam * sum_j |b_j| / |w_j|^gamma``
    with ridge coefficients ``w`` as initial weights.

    With ``arm_specific_slopes`` the outcome model is fit as two separate
    regressions on the treatment arms, each with its own slope vector.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if arm_specific_slopes:
        if response != "outcome":
            raise ValueError("arm-specific slopes apply to the outcome model only")
        return _fit_outcome_by_arm(ds, family, ridge_coefs, gamma, lam, g=g)

    Z, y, n_unpen = _design(ds, response)
    family.check_response(y)
    g = _as_weights(g, len(y))
    thresholds = _thresholds_from(ridge_coefs, gamma, lam, n_unpen)
    b, warns = _cd_solve(Z, y, family, thresholds, g, b0=start)
    return _make_fit(ds, response, family, b, n_unpen, lam, warnings=warns)


def _arm_subset(ds: Dataset, arm: int) -> tuple[Dataset, np.ndarray]:
    mask = ds.t == arm
    if int(mask.sum()) < 2:
        raise SolverError(f"arm {arm} has fewer than 2 observations")
    sub = Dataset(y=ds.y[mask], t=np.zeros(int(mask.sum()), dtype=int),
                  x=ds.x[mask], names=ds.names)
    return sub, mask


def _fit_outcome_by_arm(ds, family, ridge_coefs, gamma, lam, g=None,
                        lambda_grid=None, criterion="eric", eric_constant=0.5,
                        select=False):
    """Outcome model with per-arm slopes: two independent regressions on the
    arm subsets, combined into one GlmFit."""
    g = _as_weights(g, ds.n)
    ridge_coefs = np.asarray(ridge_coefs, dtype=float)
    if ridge_coefs.ndim == 1:
        ridge_coefs = np.stack([ridge_coefs, ridge_coefs])
    per_arm, lams, traces, warns = [], [], [], []
    for arm in (0, 1):
        sub, mask = _arm_subset(ds, arm)
        sub_g = g[mask]
        if select:
            lam_arm, trace = select_lambda(
                sub, "outcome-single-arm", family, ridge_coefs[arm], gamma,
                lambda_grid=lambda_grid, criterion=criterion,
                eric_constant=eric_constant, g=sub_g)
        else:
            lam_arm, trace = (lam if np.isscalar(lam) else lam[arm]), ()
        Z, ya, _ = _design(sub, "outcome-single-arm")
        thresholds = _thresholds_from(ridge_coefs[arm], gamma, float(lam_arm), 1)
        b, w = _cd_solve(Z, ya, family, thresholds, sub_g)
        per_arm.append(b)
        lams.append(float(lam_arm))
        traces.append(trace)
        warns += [f"arm {arm}: {m}" for m in w]
    coefs = np.stack([per_arm[0][1:], per_arm[1][1:]])
    support = tuple(int(j) for j in np.flatnonzero(np.any(coefs != 0.0, axis=0)))
    return GlmFit(
        family=family,
        response="outcome",
        intercepts=(float(per_arm[0][0]), float(per_arm[1][0] - per_arm[0][0])),
        coefficients=coefs,
        support=support,
        support_names=tuple(ds.names[j] for j in support),
        lam=(lams[0], lams[1]),
        eric_trace=tuple(traces[0]) + tuple(traces[1]),
        refit=False,
        arm_specific=True,
        warnings=tuple(warns),
    )


# ---------------------------------------------------------------------------
# lambda selection
# ---------------------------------------------------------------------------


def lambda_max(ds: Dataset, response: str, family: Family,
               ridge_coefs: np.ndarray, gamma: float = 1.0, g=None) -> float:
    """Smallest penalty level at which every penalized slope is zero."""
    Z, y, n_unpen = _design(ds, response)
    g = _as_weights(g, len(y))
    thresholds = np.full(Z.shape[1], np.inf)
    thresholds[:n_unpen] = 0.0
    b, _ = _cd_solve(Z, y, family, thresholds, g)
    grad = _smooth_grad(Z, y, b, family, g)[n_unpen:]
    w = np.abs(np.asarray(ridge_coefs, dtype=float)) ** gamma
    vals = np.abs(grad) * w
    lmax = float(np.max(vals)) if vals.size else 0.0
    return max(lmax * 1.000001, 1e-12)


def _criterion_value(ll, support_size, lam, n, kind, eric_constant):
    if kind == "bic":
        return -2.0 * ll + support_size * math.log(n)
    if kind == "eric":
        return -2.0 * ll + eric_constant * support_size * math.log(n / lam)
    raise ValueError(f"unknown criterion {kind!r}")


def _select_path(ds, response, family, ridge_coefs, gamma, lambda_grid,
                 criterion, eric_constant, g):
    Z, y, n_unpen = _design(ds, response)
    family.check_response(y)
    n = len(y)
    g = _as_weights(g, n)
    if lambda_grid is None:
        lmax = lambda_max(ds, response, family, ridge_coefs, gamma, g)
        lambda_grid = np.geomspace(lmax, lmax * 1e-4, 50)
    lambda_grid = np.asarray(lambda_grid, dtype=float)
    if lambda_grid.size == 0:
        raise ValueError("lambda_grid must be nonempty")
    if lambda_grid.size > 1 and np.any(np.diff(lambda_grid) >= 0):
        raise ValueError("lambda_grid must be strictly decreasing")

    refit_cache: dict[tuple[int, ...], float] = {}
    trace = []
    b = None
    best = (math.inf, float(lambda_grid[0]), None)
    for lam in lambda_grid:
        thresholds = _thresholds_from(ridge_coefs, gamma, float(lam), n_unpen)
        b, _ = _cd_solve(Z, y, family, thresholds, g, b0=b)
        support = tuple(int(j) for j in np.flatnonzero(b[n_unpen:] != 0.0))
        if support not in refit_cache:
            cols = np.asarray(support, dtype=int) + n_unpen
            rb, _ = _refit_columns(Z, y, family, cols, n_unpen, g)
            refit_cache[support] = _profile_loglik(y, Z @ rb, family, g)
        crit = _criterion_value(refit_cache[support], len(support), float(lam),
                                n, criterion, eric_constant)
        trace.append((float(lam), float(crit), len(support)))
        if crit < best[0]:
            best = (crit, float(lam), b.copy())
    return best[1], tuple(trace), best[2]


def select_lambda(ds: Dataset, response: str, family: Family,
                  ridge_coefs: np.ndarray, gamma: float = 1.0,
                  lambda_grid=None, criterion: str = "eric",
                  eric_constant: float = 0.5, g=None):
    """Choose the penalty level by minimizing an information criterion along
    a decreasing, warm-started lambda path.

    The criterion evaluates the *refit* log-likelihood on each support
    (refits cached by support set).  Ties break toward the larger lambda.
    Returns ``(lam, trace)``; trace lists ``(lambda, criterion,
    support_size)`` for every grid point.
    """
    lam, trace, _ = _select_path(ds, response, family, ridge_coefs, gamma,
                                 lambda_grid, criterion, eric_constant, g)
    return lam, trace


# ---------------------------------------------------------------------------
# refits
# ---------------------------------------------------------------------------


def _refit_columns(Z, y, family, cols, n_unpen, g):
    """Unpenalized weighted MLE on the unpenalized + given columns.

    Returns a full-length coefficient vector (zeros elsewhere) and a
    warnings list (tiny-ridge fallback on separation).
    """
    n, m = Z.shape
    active = np.concatenate([np.arange(n_unpen), np.asarray(cols, dtype=int)])
    Za = Z[:, active]
    warns: list[str] = []
    if family.kind == "gaussian":
        A = (Za.T * g) @ Za
        rhs = Za.T @ (g * y)
        try:
            ba = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError:
            sq = np.sqrt(g)
            ba, *_ = np.linalg.lstsq(Za * sq[:, None], y * sq, rcond=None)
        b = np.zeros(m)
        b[active] = ba
        return b, warns

    ba = np.zeros(len(active))
    ridge = 0.0
    for attempt in range(2):
        ok = True
        for _ in range(100):
            eta = Za @ ba
            _, _, u, var = _logit_parts(eta, y)
            grad = -(Za.T @ (g * u)) / n + ridge * ba
            if float(np.max(np.abs(grad))) < _REFIT_GRAD_TOL:
                break
            w = g * np.maximum(var, _PROB_FLOOR)
            H = (Za.T * w) @ Za / n + ridge * np.eye(len(active))
            try:
                step = np.linalg.solve(H, grad)
            except np.linalg.LinAlgError:
                ok = False
                break
            new = ba - step
            if not np.all(np.isfinite(new)) or float(np.max(np.abs(Za @ new))) > 36.0:
                ok = False
                break
            ba = new
        else:
            ok = False
        if ok:
            break
        if attempt == 0:
            warns.append(
                "separation in restricted logistic refit; tiny-ridge (1e-6) applied")
            ridge = _STABILIZE_RIDGE
            ba = np.zeros(len(active))
    b = np.zeros(m)
    b[active] = ba
    return b, warns


def refit_on_support(ds: Dataset, fit: GlmFit, g=None) -> GlmFit:
    """Unpenalized MLE restricted to the selected support; coefficients off
    the support stay exactly zero."""
    g = _as_weights(g, ds.n)
    if fit.arm_specific:
        return _refit_by_arm(ds, fit, g)
    Z, y, n_unpen = _design(ds, fit.response)
    cols = np.asarray(fit.support, dtype=int) + n_unpen
    b, warns = _refit_columns(Z, y, fit.family, cols, n_unpen, g)
    return _make_fit(ds, fit.response, fit.family, b, n_unpen, fit.lam,
                     trace=fit.eric_trace, refit=True,
                     warnings=tuple(fit.warnings) + tuple(warns))


def _refit_by_arm(ds: Dataset, fit: GlmFit, g) -> GlmFit:
    per_arm, warns = [], list(fit.warnings)
    for arm in (0, 1):
        sub, mask = _arm_subset(ds, arm)
        Z, ya, _ = _design(sub, "outcome-single-arm")
        supp = np.flatnonzero(fit.coefficients[arm] != 0.0)
        b, w = _refit_columns(Z, ya, fit.family, supp + 1, 1, g[mask])
        per_arm.append(b)
        warns += [f"arm {arm}: {m}" for m in w]
    coefs = np.stack([per_arm[0][1:], per_arm[1][1:]])
    support = tuple(int(j) for j in np.flatnonzero(np.any(coefs != 0.0, axis=0)))
    return GlmFit(
        family=fit.family,
        response="outcome",
        intercepts=(float(per_arm[0][0]), float(per_arm[1][0] - per_arm[0][0])),
        coefficients=coefs,
        support=support,
        support_names=tuple(ds.names[j] for j in support),
        lam=fit.lam,
        eric_trace=fit.eric_trace,
        refit=True,
        arm_specific=True,
        warnings=tuple(warns),
    )


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def kkt_violation(ds: Dataset, fit: GlmFit, ridge_coefs: np.ndarray,
                  gamma: float = 1.0, g=None) -> float:
    """Maximum Karush-Kuhn-Tucker residual of a penalized (non-refit) fit."""
    if fit.arm_specific:
        raise ValueError("KKT check applies to shared-slope fits")
    Z, y, n_unpen = _design(ds, fit.response)
    g = _as_weights(g, len(y))
    lam = fit.lam if isinstance(fit.lam, float) else max(fit.lam)
    thresholds = _thresholds_from(ridge_coefs, gamma, lam, n_unpen)
    b = np.concatenate([np.asarray(fit.intercepts, dtype=float), fit.coefficients])
    grad = _smooth_grad(Z, y, b, fit.family, g)
    worst = 0.0
    for j in range(Z.shape[1]):
        th = thresholds[j]
        if th == 0.0:
            worst = max(worst, abs(grad[j]))
        elif not np.isfinite(th):
            continue
        elif b[j] != 0.0:
            worst = max(worst, abs(grad[j] + math.copysign(th, b[j])))
        else:
            worst = max(worst, max(0.0, abs(grad[j]) - th))
    return worst


def refit_gradient_norm(ds: Dataset, fit: GlmFit, g=None) -> float:
    """Max absolute smooth-loss gradient over active columns of a refit."""
    g = _as_weights(g, ds.n)
    if fit.arm_specific:
        worst = 0.0
        for arm in (0, 1):
            sub, mask = _arm_subset(ds, arm)
            Z, ya, _ = _design(sub, "outcome-single-arm")
            icept = fit.intercepts[0] + (fit.intercepts[1] if arm == 1 else 0.0)
            b = np.concatenate([[icept], fit.coefficients[arm]])
            grad = _smooth_grad(Z, ya, b, fit.family, g[mask])
            active = np.concatenate([[0], np.flatnonzero(fit.coefficients[arm]) + 1])
            worst = max(worst, float(np.max(np.abs(grad[active.astype(int)]))))
        return worst
    Z, y, n_unpen = _design(ds, fit.response)
    b = np.concatenate([np.asarray(fit.intercepts, dtype=float), fit.coefficients])
    grad = _smooth_grad(Z, y, b, fit.family, g)
    active = np.concatenate([np.arange(n_unpen),
                             np.asarray(fit.support, dtype=int) + n_unpen])
    return float(np.max(np.abs(grad[active])))


# ---------------------------------------------------------------------------
# pipeline entry
# ---------------------------------------------------------------------------


def fit_working_model(ds: Dataset, response: str, family: Family,
                      gamma: float = 1.0, ridge_lambda: float | None = None,
                      lambda_grid=None, criterion: str = "eric",
                      eric_constant: float = 0.5,
                      arm_specific_slopes: bool = False, g=None,
                      fixed_lambda=None, warm_start=None):
    """Full working-model pipeline: ridge weights, lambda selection (unless
    ``fixed_lambda`` is given), adaptive-LASSO fit, refit on support.

    Returns ``(refit, penalized)``; the penalized fit carries the criterion
    trace and selected lambda, and its coefficients serve as warm starts
    for reweighted recomputation.
    """
    if ridge_lambda is None:
        ridge_lambda = 1.0 / ds.n
    g = _as_weights(g, ds.n)

    if arm_specific_slopes and response == "outcome":
        coefs = []
        for arm in (0, 1):
            sub, mask = _arm_subset(ds, arm)
            coefs.append(fit_ridge(sub, "outcome-single-arm", family,
                                   ridge_lambda, g=g[mask]))
        ridge_coefs = np.stack(coefs)
        pen = _fit_outcome_by_arm(
            ds, family, ridge_coefs, gamma,
            fixed_lambda if fixed_lambda is not None else 0.0, g=g,
            lambda_grid=lambda_grid, criterion=criterion,
            eric_constant=eric_constant, select=fixed_lambda is None)
        ref = _refit_by_arm(ds, pen, g)
        return ref, pen

    ridge_coefs = fit_ridge(ds, response, family, ridge_lambda, g=g)
    if fixed_lambda is None:
        lam, trace, b_sel = _select_path(ds, response, family, ridge_coefs,
                                         gamma, lambda_grid, criterion,
                                         eric_constant, g)
        Z, y, n_unpen = _design(ds, response)
        pen = _make_fit(ds, response, family, b_sel, n_unpen, lam, trace=trace)
    else:
        pen = fit_adaptive_lasso(ds, response, family, ridge_coefs, gamma,
                                 float(fixed_lambda), g=g, start=warm_start)
    ref = refit_on_support(ds, pen, g=g)
    return ref, pen
