"""Penalized logistic regression by IRLS with coordinate descent.

Each outer iteration replaces the weighted negative log-likelihood by its
quadratic expansion at the current coefficients (working response ``z``,
working weights ``w``) and then minimizes

    (1 / 2n) * sum_i v_i w_i (z_i - b0 - x_i . beta)**2 + lam * sum_j pen(beta_j)

one coordinate at a time.  Coordinate ``j`` has curvature
``a_j = sum_i v_i w_i x_ij**2 / n``, so its exact update is
``threshold(lam / a_j, g_j / a_j)`` with ``g_j`` the weighted partial-residual
correlation.  The intercept is never penalized.

The working objective is the *mean* loss ``(1/n) sum_i v_i nll_i`` plus the
penalty, which keeps ``lam`` comparable across sample sizes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.special import expit

from .data import DataError, Dataset, stratified_folds
from .penalties import (
    Penalty,
    PenaltySpec,
    _pen1,
    _scalar_objective,
    _threshold,
    penalty_value,
)

__all__ = [
    "SolverError",
    "FitOptions",
    "ModelFit",
    "CvResult",
    "predict_proba",
    "per_sample_losses",
    "neg_log_likelihood",
    "nll_gradient",
    "irls_working_set",
    "majorizer_working_set",
    "penalized_objective",
    "lambda_max",
    "lambda_grid",
    "fit",
    "fit_path",
    "cross_validate",
]

PROB_FLOOR = 1e-12
WEIGHT_FLOOR = 1e-5
_LOG_FLOOR = math.log(PROB_FLOOR)


class SolverError(RuntimeError):
    """The penalized objective became non-finite."""


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-4
    max_outer: int = 50
    max_inner: int = 100


@dataclass
class ModelFit:
    """Fitted coefficients on the standardized scale."""

    beta: np.ndarray
    intercept: float
    spec: PenaltySpec
    loss_trace: list[float] = field(default_factory=list)
    n_outer_iters: int = 0
    converged: bool = False

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.beta)

    def decision_function(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.beta.shape[0]:
            raise ValueError(f"expected {self.beta.shape[0]} descriptors, got {x.shape[-1]}")
        return self.intercept + x @ self.beta


@dataclass(frozen=True)
class CvResult:
    lambda_grid: np.ndarray
    mean_cv_deviance: np.ndarray
    chosen_lambda: float
    fold_count: int
    kind: Penalty
    seed: int

    def to_dict(self) -> dict:
        return {
            "penalty": self.kind.value,
            "fold_count": self.fold_count,
            "seed": self.seed,
            "chosen_lambda": self.chosen_lambda,
            "lambda_grid": self.lambda_grid.tolist(),
            "mean_cv_deviance": self.mean_cv_deviance.tolist(),
        }


# ---------------------------------------------------------------------------
# likelihood pieces
# ---------------------------------------------------------------------------


def predict_proba(fit: ModelFit, x) -> np.ndarray | float:
    """P(y = 1 | x) for one row or a matrix of rows."""
    p = expit(fit.decision_function(x))
    return float(p) if np.ndim(p) == 0 else p


def _log_probs(eta):
    # log f and log(1 - f), clamped at log(PROB_FLOOR)
    log_f = -np.logaddexp(0.0, -eta)
    log_1mf = -np.logaddexp(0.0, eta)
    return np.maximum(log_f, _LOG_FLOOR), np.maximum(log_1mf, _LOG_FLOOR)


def per_sample_losses(beta, intercept: float, x, y) -> np.ndarray:
    eta = intercept + np.asarray(x, dtype=float) @ np.asarray(beta, dtype=float)
    log_f, log_1mf = _log_probs(eta)
    y = np.asarray(y, dtype=float)
    return -(y * log_f + (1.0 - y) * log_1mf)


def neg_log_likelihood(beta, intercept: float, x, y) -> float:
    return float(per_sample_losses(beta, intercept, x, y).sum())


def nll_gradient(beta, intercept: float, x, y) -> tuple[float, np.ndarray]:
    """Gradient of the summed NLL with respect to ``(intercept, beta)``."""
    x = np.asarray(x, dtype=float)
    resid = expit(intercept + x @ np.asarray(beta, dtype=float)) - np.asarray(y, dtype=float)
    return float(resid.sum()), x.T @ resid


def irls_working_set(beta, intercept: float, d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Working response ``z`` and weights ``w`` of the quadratic expansion."""
    eta = intercept + d.x @ np.asarray(beta, dtype=float)
    f = expit(eta)
    w = np.maximum(f * (1.0 - f), WEIGHT_FLOOR)
    z = eta + (d.y - f) / w
    return z, w


def majorizer_working_set(beta, intercept: float, d: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Working response and weights of the quadratic upper bound (curvature 1/4)."""
    eta = intercept + d.x @ np.asarray(beta, dtype=float)
    z = eta + 4.0 * (d.y - expit(eta))
    return z, np.full(d.n, 0.25)


def penalized_objective(beta, intercept: float, d: Dataset, spec: PenaltySpec,
                        sample_weights=None) -> float:
    losses = per_sample_losses(beta, intercept, d.x, d.y)
    if sample_weights is not None:
        losses = losses * sample_weights
    return float(losses.sum()) / d.n + penalty_value(spec, beta)


# ---------------------------------------------------------------------------
# compiled coordinate descent
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _residual(XT, z, beta, b0):
    r = z - b0
    for j in range(XT.shape[0]):
        bj = beta[j]
        if bj != 0.0:
            r -= bj * XT[j]
    return r


@numba.njit(cache=True)
def _curvatures(XT, ww, n):
    p, m = XT.shape
    a = np.empty(p)
    for j in range(p):
        s = 0.0
        for i in range(m):
            s += ww[i] * XT[j, i] * XT[j, i]
        a[j] = s / n
    return a


@numba.njit(cache=True)
def _intercept_step(r, ww, b0, sw):
    s = 0.0
    for i in range(r.shape[0]):
        s += ww[i] * r[i]
    delta = s / sw
    if delta != 0.0:
        for i in range(r.shape[0]):
            r[i] -= delta
    return b0 + delta, abs(delta)


@numba.njit(cache=True)
def _coordinate_step(XT, ww, r, beta, a, j, kind, lam, eps, n):
    if a[j] <= 0.0:
        old = beta[j]
        beta[j] = 0.0
        return abs(old)
    xj = XT[j]
    s = 0.0
    for i in range(r.shape[0]):
        s += ww[i] * xj[i] * r[i]
    old = beta[j]
    g = s / n + a[j] * old
    lam_j = lam / a[j]
    target = g / a[j]
    new = _threshold(kind, lam_j, eps, target)
    if new != old:
        # move only on strict improvement, so exact ties cannot ping-pong
        f_old = _scalar_objective(kind, lam_j, eps, target, old)
        f_new = _scalar_objective(kind, lam_j, eps, target, new)
        if not f_new < f_old - 1e-13 * (1.0 + abs(f_old)):
            return 0.0
        d = new - old
        for i in range(r.shape[0]):
            r[i] -= d * xj[i]
        beta[j] = new
        return abs(d)
    return 0.0


@numba.njit(cache=True)
def _pass(XT, ww, r, beta, b0, a, sw, idx, kind, lam, eps, n):
    b0, delta = _intercept_step(r, ww, b0, sw)
    for j in idx:
        d = _coordinate_step(XT, ww, r, beta, a, j, kind, lam, eps, n)
        if d > delta:
            delta = d
    return b0, delta


@numba.njit(cache=True)
def _cd_solve(XT, z, ww, beta, b0, kind, lam, eps, n, max_inner, tol):
    """Minimize the penalized weighted least-squares surrogate in place.

    Full sweeps alternate with runs of sweeps restricted to the current
    nonzero set; ``max_inner`` caps the total number of sweeps of both kinds.
    """
    p = XT.shape[0]
    r = _residual(XT, z, beta, b0)
    a = _curvatures(XT, ww, n)
    sw = ww.sum()
    everything = np.arange(p)
    sweeps = 0
    while sweeps < max_inner:
        b0, delta = _pass(XT, ww, r, beta, b0, a, sw, everything, kind, lam, eps, n)
        sweeps += 1
        if delta <= tol:
            break
        active = np.flatnonzero(beta)
        while sweeps < max_inner:
            b0, delta = _pass(XT, ww, r, beta, b0, a, sw, active, kind, lam, eps, n)
            sweeps += 1
            if delta <= tol:
                break
    return b0, sweeps


@numba.njit(cache=True)
def _surrogate(XT, z, ww, beta, b0, kind, lam, eps, n):
    r = _residual(XT, z, beta, b0)
    s = 0.0
    for i in range(r.shape[0]):
        s += ww[i] * r[i] * r[i]
    pen = 0.0
    for j in range(beta.shape[0]):
        pen += _pen1(kind, beta[j], eps)
    return 0.5 * s / n + lam * pen


@numba.njit(cache=True)
def _traced_sweep(XT, z, ww, beta, b0, kind, lam, eps, n):
    # one full sweep, recording the surrogate after every single update
    p = XT.shape[0]
    r = _residual(XT, z, beta, b0)
    a = _curvatures(XT, ww, n)
    trace = np.empty(p + 2)
    trace[0] = _surrogate(XT, z, ww, beta, b0, kind, lam, eps, n)
    b0, _ = _intercept_step(r, ww, b0, ww.sum())
    trace[1] = _surrogate(XT, z, ww, beta, b0, kind, lam, eps, n)
    for j in range(p):
        _coordinate_step(XT, ww, r, beta, a, j, kind, lam, eps, n)
        trace[j + 2] = _surrogate(XT, z, ww, beta, b0, kind, lam, eps, n)
    return b0, trace


def surrogate_objective(d: Dataset, z, w, beta, intercept, spec: PenaltySpec, sample_weights=None):
    ww = np.asarray(w, dtype=float) * (1.0 if sample_weights is None else np.asarray(sample_weights, float))
    return float(_surrogate(np.ascontiguousarray(d.x.T), np.asarray(z, float), ww,
                            np.asarray(beta, float), float(intercept), spec.kind.code,
                            spec.lam, spec.epsilon, d.n))


def traced_sweep(d: Dataset, beta, intercept, spec: PenaltySpec, sample_weights=None):
    """Run one coordinate sweep at the current expansion point.

    Returns the updated ``(beta, intercept)`` and the surrogate objective
    recorded before the sweep and after the intercept and each coordinate
    update.
    """
    z, w = irls_working_set(beta, intercept, d)
    ww = w * (1.0 if sample_weights is None else np.asarray(sample_weights, float))
    beta = np.array(beta, dtype=float)
    b0, trace = _traced_sweep(np.ascontiguousarray(d.x.T), z, ww, beta, float(intercept),
                              spec.kind.code, spec.lam, spec.epsilon, d.n)
    return beta, float(b0), trace


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------


def _check_weights(d: Dataset, sample_weights):
    if sample_weights is None:
        v = np.ones(d.n)
    else:
        v = np.asarray(sample_weights, dtype=float)
        if v.shape != (d.n,):
            raise ValueError(f"sample_weights must have length {d.n}")
        if np.any(v < 0) or np.any(v > 1):
            raise ValueError("sample_weights must lie in [0, 1]")
    live = d.y[v > 0]
    if live.size == 0 or live.min() == live.max():
        raise DataError("fitting needs both classes among positively weighted samples")
    return v


def _null_intercept(y, v) -> float:
    ybar = float(np.dot(v, y) / v.sum())
    return math.log(ybar / (1.0 - ybar))


def fit(d: Dataset, spec: PenaltySpec, opts: FitOptions | None = None, sample_weights=None,
        init: tuple[np.ndarray, float] | None = None, xt: np.ndarray | None = None) -> ModelFit:
    """Fit penalized logistic regression on a standardized dataset.

    Args:
        d: training data; columns are expected to be standardized.
        spec: penalty family and strength.
        opts: convergence tolerance and iteration caps.
        sample_weights: per-sample weights in [0, 1] multiplying each loss.
        init: warm start ``(beta, intercept)``; defaults to ``beta = 0`` and
            the null-model intercept.
        xt: optional cached ``d.x.T`` in C order, to avoid re-transposing.

    Each IRLS step is halved (up to 30 times) if it would raise the penalized
    objective.  If that still fails, a step on the ``w = 1/4`` quadratic bound
    is tried, and if neither descends the fit stops where it is.  Convergence
    means the largest change among the coefficients
    and the intercept is at most ``opts.tol``.
    """
    opts = opts or FitOptions()
    v = _check_weights(d, sample_weights)
    XT = np.ascontiguousarray(d.x.T) if xt is None else xt
    if init is None:
        beta = np.zeros(d.p)
        b0 = _null_intercept(d.y, v)
    else:
        beta = np.array(init[0], dtype=float)
        b0 = float(init[1])

    obj = penalized_objective(beta, b0, d, spec, v)
    trace: list[float] = []
    converged = False
    it = 0
    for it in range(1, opts.max_outer + 1):
        z, w = irls_working_set(beta, b0, d)
        ww = w * v
        new_beta = beta.copy()
        new_b0, _ = _cd_solve(XT, z, ww, new_beta, b0, spec.kind.code, spec.lam,
                              spec.epsilon, d.n, opts.max_inner, opts.tol)
        new_obj = penalized_objective(new_beta, new_b0, d, spec, v)
        halvings = 0
        while not new_obj <= obj and halvings < 30:
            new_beta = 0.5 * (new_beta + beta)
            new_b0 = 0.5 * (new_b0 + b0)
            new_obj = penalized_objective(new_beta, new_b0, d, spec, v)
            halvings += 1
        if not math.isfinite(new_obj):
            raise SolverError(f"objective diverged at outer iteration {it}")
        if not new_obj <= obj:
            # Saturated probabilities make the expansion a poor model of the
            # loss.  The bound w = 1/4 gives a surrogate lying above the loss
            # and touching it at beta, so minimizing it cannot go uphill.
            z, w = majorizer_working_set(beta, b0, d)
            new_beta = beta.copy()
            new_b0, _ = _cd_solve(XT, z, w * v, new_beta, b0, spec.kind.code, spec.lam,
                                  spec.epsilon, d.n, opts.max_inner, opts.tol)
            new_obj = penalized_objective(new_beta, new_b0, d, spec, v)
        if not new_obj <= obj:
            # no descent from either surrogate: stay put
            trace.append(obj)
            converged = True
            break
        delta = max(float(np.max(np.abs(new_beta - beta), initial=0.0)), abs(new_b0 - b0))
        beta, b0, obj = new_beta, new_b0, new_obj
        trace.append(obj)
        if delta <= opts.tol:
            converged = True
            break
    # adding 0.0 turns any -0.0 left by thresholding into +0.0
    return ModelFit(beta=beta + 0.0, intercept=float(b0), spec=spec, loss_trace=trace,
                    n_outer_iters=it, converged=converged)


# ---------------------------------------------------------------------------
# regularization path and cross-validation
# ---------------------------------------------------------------------------


@numba.njit(cache=True)
def _zero_lambda_logsum(g, a, eps_fixed):
    # smallest lam (bisection in log space) at which every coordinate thresholds to 0
    out = 0.0
    for j in range(g.shape[0]):
        if a[j] <= 0.0 or g[j] == 0.0:
            continue
        w = abs(g[j]) / a[j]
        lo = math.log(1e-16)
        hi = math.log(max(4.0 * a[j] * w * w + 1.0, 1.0))
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            lam = math.exp(mid)
            eps = eps_fixed if eps_fixed > 0.0 else 0.01 * math.sqrt(lam)
            if _threshold(2, lam / a[j], eps, w) == 0.0:
                hi = mid
            else:
                lo = mid
        val = math.exp(hi)
        if val > out:
            out = val
    return out


def lambda_max(d: Dataset, kind: Penalty | str, sample_weights=None, epsilon: float | None = None) -> float:
    """Smallest ``lam`` for which ``beta = 0`` is a fixed point of the solver.

    For ``l1`` on unweighted standardized data this is
    ``max_j |sum_i x_ij (y_i - ybar)| / n``.
    """
    kind = Penalty(kind)
    v = _check_weights(d, sample_weights)
    ybar = float(np.dot(v, d.y) / v.sum())
    w = v * ybar * (1.0 - ybar)
    g = d.x.T @ (v * (d.y - ybar)) / d.n
    a = (d.x**2).T @ w / d.n
    if kind is Penalty.L1:
        return float(np.max(np.abs(g)))
    if kind is Penalty.HALF:
        # zero iff |g/a| <= 1.5 (lam/a)^(2/3)
        ok = a > 0
        return float(np.max((np.abs(g[ok]) / 1.5) ** 1.5 / np.sqrt(a[ok]), initial=0.0))
    return float(_zero_lambda_logsum(g, a, 0.0 if epsilon is None else float(epsilon)))


def lambda_grid(lam_max: float, size: int, ratio: float = 1e-3) -> np.ndarray:
    """Descending log-spaced grid from ``lam_max`` down to ``ratio * lam_max``."""
    if size < 1:
        raise ValueError("grid size must be >= 1")
    if size == 1:
        return np.array([lam_max])
    return np.geomspace(lam_max, ratio * lam_max, size)


def fit_path(d: Dataset, kind: Penalty | str, lambdas, opts: FitOptions | None = None,
             sample_weights=None, epsilon: float | None = None) -> list[ModelFit]:
    """Fits along ``lambdas`` (assumed descending), each warm-started from the last."""
    kind = Penalty(kind)
    xt = np.ascontiguousarray(d.x.T)
    fits: list[ModelFit] = []
    init = None
    for lam in lambdas:
        spec = PenaltySpec(kind, float(lam), epsilon)
        f = fit(d, spec, opts, sample_weights=sample_weights, init=init, xt=xt)
        fits.append(f)
        init = (f.beta, f.intercept)
    return fits


def cross_validate(d: Dataset, kind: Penalty | str, folds: int = 10, grid_size: int = 30,
                   seed: int = 0, opts: FitOptions | None = None,
                   epsilon: float | None = None) -> CvResult:
    """Choose ``lam`` by stratified k-fold cross-validated deviance.

    The score is the held-out negative log-likelihood summed over folds and
    divided by ``n``.  Among equal scores the larger ``lam`` wins.
    """
    kind = Penalty(kind)
    if folds < 2:
        raise ValueError("folds must be >= 2")
    rng = np.random.default_rng(seed)
    fold_id = stratified_folds(d.y, folds, rng)
    for k in range(folds):
        held = d.y[fold_id == k]
        if held.min() == held.max():
            raise DataError(f"fold {k} lacks one class")
    lam_max = lambda_max(d, kind, epsilon=epsilon)
    grid = lambda_grid(lam_max, grid_size)
    if kind is Penalty.LOGSUM and epsilon is not None and epsilon >= math.sqrt(grid[-1]):
        raise ValueError(f"epsilon {epsilon} is not below sqrt(lambda) for the smallest grid value")
    dev = np.zeros(len(grid))
    for k in range(folds):
        train = d.subset(np.flatnonzero(fold_id != k))
        test = d.subset(np.flatnonzero(fold_id == k))
        for i, f in enumerate(fit_path(train, kind, grid, opts, epsilon=epsilon)):
            dev[i] += neg_log_likelihood(f.beta, f.intercept, test.x, test.y)
    dev /= d.n
    best = dev.min()
    # grid is descending, so the first near-minimal entry is the largest lam
    chosen = int(np.flatnonzero(dev <= best + 1e-12 * max(1.0, abs(best)))[0])
    return CvResult(lambda_grid=grid, mean_cv_deviance=dev, chosen_lambda=float(grid[chosen]),
                    fold_count=folds, kind=kind, seed=seed)
