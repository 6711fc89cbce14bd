"""Logistic-regression Fisher information and the boundary-sample estimation study.

Feature vectors are augmented with a trailing constant 1 (bias last).  The
per-sample information weight is sigmoid(w.x) * (1 - sigmoid(w.x)), which
peaks at 0.25 on the decision boundary.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg, stats

from .data import (Dataset, augment, fmt, gen_boundary_cfes, gen_logistic, make_rng,
                   second_moment_residual, sigmoid)
from .errors import (ExperimentInvalid, SeparationWarning, SingularMatrixError, ValidationError)

PSD_RTOL = 1e-9


@dataclass
class FisherMatrix:
    m: np.ndarray
    n_points: int

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=np.float64)
        if self.m.ndim != 2 or self.m.shape[0] != self.m.shape[1]:
            raise ValidationError("Fisher matrix must be square")

    @property
    def dim(self):
        return self.m.shape[0]

    def is_symmetric(self, tol=1e-12):
        return bool(np.max(np.abs(self.m - self.m.T), initial=0.0) <= tol * max(1.0, np.abs(self.m).max()))

    def is_psd(self):
        ev = np.linalg.eigvalsh(0.5 * (self.m + self.m.T))
        return bool(ev.min() >= -PSD_RTOL * max(np.linalg.norm(self.m, 2), 1e-300))


def fim_weight(z):
    s = sigmoid(z)
    return s * (1.0 - s)


def logistic_fim(w, xs):
    """Sum over rows of sigmoid'(w.x) x x^T for augmented rows ``xs``."""
    w = np.asarray(w, dtype=np.float64)
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    if xs.shape[1] != w.size:
        raise ValidationError(f"feature dimension {xs.shape[1]} != parameter dimension {w.size}")
    if xs.size and not np.all(xs[:, -1] == 1.0):
        raise ValidationError("last feature coordinate must be the constant bias 1")
    wt = fim_weight(xs @ w)
    m = (xs * wt[:, None]).T @ xs
    return FisherMatrix(0.5 * (m + m.T), xs.shape[0])


def score_outer_product_fim(w, xs, n_draws, rng):
    """Monte-Carlo Fisher estimate: mean of s s^T with s = (y - sigmoid(w.x)) x.

    Each draw picks a row of ``xs`` uniformly and a label y ~ Bernoulli; the
    result is scaled by the number of rows so it estimates the summed FIM.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
    rows = xs[rng.integers(0, len(xs), size=n_draws)]
    p = sigmoid(rows @ w)
    y = (rng.random(n_draws) < p).astype(np.float64)
    s = (y - p)[:, None] * rows
    return FisherMatrix(len(xs) * (s.T @ s) / n_draws, len(xs))


@dataclass
class MleResult:
    w_hat: np.ndarray
    converged: bool
    iterations: int
    final_gradient_norm: float
    separated: bool = False


def _loglik(X, y, w):
    z = X @ w
    return float(np.sum(y * z - np.logaddexp(0.0, z)))


def fit_mle(ds, mle_tol=1e-8, max_iter=100, ridge=1e-8, cap=50.0):
    """Newton-Raphson logistic MLE with step halving.

    ``ds`` holds raw features; the bias column is appended here.  If the
    weight norm exceeds ``cap``, or the gradient vanishes only because the
    iterate separates every point, the data are treated as separable: a
    SeparationWarning is issued and the iterate, rescaled to norm ``cap``, is
    returned unconverged.
    """
    X = augment(ds.features) if isinstance(ds, Dataset) else np.asarray(ds[0], dtype=np.float64)
    y = (ds.labels if isinstance(ds, Dataset) else np.asarray(ds[1])).astype(np.float64)
    p_dim = X.shape[1]
    w = np.zeros(p_dim)
    gnorm = np.inf
    for it in range(max_iter + 1):
        p = sigmoid(X @ w)
        grad = X.T @ (y - p)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= mle_tol:
            if np.all((2 * y - 1) * (X @ w) > 0):
                # a perfectly separating iterate only "converges" because the
                # gradient underflows; the likelihood keeps rising along w
                return _separated(w, cap, it, gnorm)
            return MleResult(w, True, it, gnorm)
        if it == max_iter:
            break
        H = (X * (p * (1 - p))[:, None]).T @ X + ridge * np.eye(p_dim)
        step = linalg.solve(H, grad, assume_a="pos")
        ll0, t = _loglik(X, y, w), 1.0
        while _loglik(X, y, w + t * step) < ll0 and t > 1e-10:
            t *= 0.5
        w = w + t * step
        if np.linalg.norm(w) > cap:
            return _separated(w, cap, it + 1, gnorm)
    return MleResult(w, False, max_iter, gnorm)


def _separated(w, cap, it, gnorm):
    warnings.warn(f"logistic MLE weights diverge (cap {cap}); data look separable", SeparationWarning, stacklevel=3)
    return MleResult(w * (cap / np.linalg.norm(w)), False, it, gnorm, separated=True)


def loewner_dominates(a, b, tol=None):
    """True iff a - b is PSD up to ``tol`` (default 1e-9 times the matrix norm)."""
    A = a.m if isinstance(a, FisherMatrix) else np.asarray(a, dtype=np.float64)
    B = b.m if isinstance(b, FisherMatrix) else np.asarray(b, dtype=np.float64)
    if A.shape != B.shape:
        raise ValidationError(f"shape mismatch {A.shape} vs {B.shape}")
    D = A - B
    if tol is None:
        tol = PSD_RTOL * max(np.linalg.norm(A, 2), np.linalg.norm(B, 2), 1e-300)
    return bool(np.linalg.eigvalsh(0.5 * (D + D.T)).min() >= -tol)


def trace_inverse(a, tol=None):
    """tr(A^{-1}) through a Cholesky factorisation."""
    A = a.m if isinstance(a, FisherMatrix) else np.asarray(a, dtype=np.float64)
    A = 0.5 * (A + A.T)
    if tol is None:
        tol = PSD_RTOL * max(np.linalg.norm(A, 2), 1e-300)
    if np.linalg.eigvalsh(A).min() <= tol:
        raise SingularMatrixError("matrix is not positive definite")
    try:
        c = linalg.cho_factor(A, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from exc
    inv = linalg.cho_solve(c, np.eye(A.shape[0]))
    return float(np.trace(inv))


@dataclass
class Thm1Report:
    """Estimation-error comparison between standard and boundary-infused samples."""
    mse_standard: float
    mse_cf: float
    ratio: float
    trials: int
    ci95_ratio: tuple
    trace_inv_standard: float
    trace_inv_cf: float
    attempts: int = 0
    separated_trials: int = 0
    frac_trace_inv_cf_lower: float = float("nan")
    mean_second_moment_residual: float = float("nan")
    rows: list = field(default_factory=list, repr=False)

    def to_dict(self):
        d = asdict(self)
        d.pop("rows")
        d["ci95_ratio"] = list(self.ci95_ratio)
        return d

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)

    def rows_to_csv(self, path):
        cols = ["trial", "mse_std", "mse_cf", "trinv_std", "trinv_cf", "separated_std", "separated_cf"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in self.rows:
                w.writerow([r["trial"], fmt(r["mse_std"]), fmt(r["mse_cf"]), fmt(r["trinv_std"]),
                            fmt(r["trinv_cf"]), int(r["separated_std"]), int(r["separated_cf"])])


def _bootstrap_ratio_ci(num, den, seed, n_resamples=2000):
    if len(num) < 2:
        r = float(np.mean(num) / np.mean(den))
        return (r, r)
    res = stats.bootstrap((num, den), lambda a, b, axis=-1: a.mean(axis) / b.mean(axis), paired=True,
                          vectorized=True, n_resamples=n_resamples, confidence_level=0.95,
                          method="percentile", rng=make_rng(seed, 40))
    return (float(res.confidence_interval.low), float(res.confidence_interval.high))


def thm1_experiment(truth, k, trials, seed=0, x_sampler=None, cf_fraction=0.5, max_separation_rate=0.3,
                    mle_tol=1e-8, max_iter=100):
    """Monte-Carlo comparison of MLE error with and without boundary samples.

    Per trial the standard arm is ``k`` draws from the logistic model; the
    infused arm keeps the first ``k * (1 - cf_fraction)`` of those and adds
    boundary samples.  Trials where either fit separates are discarded and
    redrawn until ``trials`` valid ones are collected; too many discards
    raise ExperimentInvalid.
    """
    if k < 2 * (truth.dim + 1) or k % 2:
        raise ValidationError(f"k must be even and >= {2 * (truth.dim + 1)}")
    n_cf = int(round(k * cf_fraction))
    w_t = truth.w_t
    rows = []
    attempts = separated = 0
    max_attempts = int(np.ceil(trials / (1.0 - max_separation_rate)))
    while len(rows) < trials:
        if attempts >= max_attempts:
            raise ExperimentInvalid(f"{separated}/{attempts} trials separated (> {max_separation_rate:.0%})")
        t_seed = int(make_rng(seed, 41, attempts).integers(2**62))
        attempts += 1
        std = gen_logistic(truth, k, x_sampler, t_seed)
        if n_cf:
            cfs = gen_boundary_cfes(truth, n_cf, x_sampler, t_seed)
            infused = Dataset.concat(std.subset(np.arange(k - n_cf)), cfs)
        else:
            cfs, infused = None, std
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SeparationWarning)
            r_std = fit_mle(std, mle_tol, max_iter)
            r_cf = fit_mle(infused, mle_tol, max_iter) if n_cf else r_std
        if r_std.separated or r_cf.separated or not (r_std.converged and r_cf.converged):
            separated += 1
            continue
        f_std = logistic_fim(w_t, augment(std.features))
        f_cf = logistic_fim(w_t, augment(infused.features))
        rows.append({
            "trial": len(rows),
            "mse_std": float(np.sum((r_std.w_hat - w_t) ** 2)),
            "mse_cf": float(np.sum((r_cf.w_hat - w_t) ** 2)),
            "trinv_std": _safe_trace_inverse(f_std),
            "trinv_cf": _safe_trace_inverse(f_cf),
            "separated_std": False,
            "separated_cf": False,
            "residual": second_moment_residual(std.features, cfs.features) if cfs is not None else 0.0,
        })
    mse_s = np.array([r["mse_std"] for r in rows])
    mse_c = np.array([r["mse_cf"] for r in rows])
    ti_s = np.array([r["trinv_std"] for r in rows])
    ti_c = np.array([r["trinv_cf"] for r in rows])
    return Thm1Report(
        mse_standard=float(mse_s.mean()), mse_cf=float(mse_c.mean()), ratio=float(mse_c.mean() / mse_s.mean()),
        trials=len(rows), ci95_ratio=_bootstrap_ratio_ci(mse_c, mse_s, seed),
        trace_inv_standard=float(ti_s.mean()), trace_inv_cf=float(ti_c.mean()),
        attempts=attempts, separated_trials=separated,
        frac_trace_inv_cf_lower=float(np.mean(ti_c < ti_s)),
        mean_second_moment_residual=float(np.mean([r["residual"] for r in rows])),
        rows=rows)


def _safe_trace_inverse(f):
    try:
        return trace_inverse(f)
    except SingularMatrixError:
        return float("inf")
