"""Counterfactual explanations against a teacher MLP.

Search ascends the logit margin toward the opposite class with unit-norm
steps until the predicted class flips, bisects the last step down to the 0.5
level set, and then pushes a small overshoot past the crossing so the flip
holds strictly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import Dataset, fmt, make_rng
from .errors import CfeNotFound, OrientationError, ValidationError
from .nn import MlpModel, backward, forward, prob1

_MAX_BISECT = 200


@dataclass
class CfeConfig:
    step_size: float = 0.02
    max_steps: int = 2000
    overshoot_delta: float = 1e-3
    bisection_tol: float = 1e-10  # on |f - 0.5|
    restarts: int = 3
    jitter: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if min(self.step_size, self.max_steps, self.overshoot_delta, self.bisection_tol) <= 0:
            raise ValidationError("CFE search parameters must be positive")
        if self.overshoot_delta < self.bisection_tol:
            raise ValidationError("overshoot_delta must be >= bisection_tol")


@dataclass
class CfePair:
    x: np.ndarray
    x_cf: np.ndarray
    y: int
    y_cf: int
    perturbation_norm: float
    teacher_prob_at_cf: float
    source_index: int = -1


def _prob_fn(model):
    if isinstance(model, MlpModel):
        return lambda X: prob1(model, np.atleast_2d(X))
    return lambda X: np.asarray(model(np.atleast_2d(np.asarray(X, dtype=np.float64))), dtype=np.float64).reshape(-1)


def refine_to_boundary(teacher, x_inside, x_outside, tol=1e-10):
    """Bisect the segment between two points of opposite predicted class.

    ``teacher`` is an MLP or a vectorised callable returning class-1
    probabilities.  Returns a point on the segment with |f - 0.5| <= tol, or
    the closest point found once the bisection interval stops shrinking in
    floating point.
    """
    f = _prob_fn(teacher)
    a = np.asarray(x_inside, dtype=np.float64)
    b = np.asarray(x_outside, dtype=np.float64)
    fa, fb = float(f(a)[0]), float(f(b)[0])
    side_a = fa >= 0.5
    if side_a == (fb >= 0.5):
        raise OrientationError(f"endpoints do not straddle 0.5 (f={fa:.6g}, {fb:.6g})")
    for x, fx in ((a, fa), (b, fb)):
        if abs(fx - 0.5) <= tol:
            return x.copy()
    lo, hi = 0.0, 1.0
    d = b - a
    best, best_gap = None, np.inf
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        xm = a + mid * d
        fm = float(f(xm)[0])
        gap = abs(fm - 0.5)
        if gap < best_gap:
            best, best_gap = xm, gap
        if gap <= tol:
            break
        if (fm >= 0.5) == side_a:
            lo = mid
        else:
            hi = mid
    return best


def _margin_direction(teacher, z, cur, h=1e-6):
    if not isinstance(teacher, MlpModel):
        # black-box teacher: central differences on the log-odds
        f = _prob_fn(teacher)
        eye = h * np.eye(z.size)
        pts = np.vstack([z + eye, z - eye])
        p = np.clip(f(pts), 1e-300, 1 - 1e-16)
        lo = np.log(p) - np.log1p(-p)
        g = (lo[:z.size] - lo[z.size:]) / (2 * h)
        return g if cur == 0 else -g
    tr = forward(teacher, z)
    g_out = np.zeros((1, 2))
    g_out[0, 1 - cur] = 1.0
    g_out[0, cur] = -1.0
    return backward(teacher, tr, g_out).inputs[0]


def generate_cfe(teacher, x, y, cfg=None, rng=None):
    """Closest-flip search from ``x``; ``y`` is the label carried into the pair."""
    cfg = cfg or CfeConfig()
    x = np.asarray(x, dtype=np.float64)
    f = _prob_fn(teacher)
    cur = int(f(x)[0] >= 0.5)
    rng = rng if rng is not None else make_rng(cfg.seed, 10)
    for attempt in range(cfg.restarts + 1):
        z = x if attempt == 0 else x + cfg.jitter * rng.normal(size=x.shape)
        if int(f(z)[0] >= 0.5) != cur:
            z_prev, z = x, z
        else:
            z_prev = None
            for _ in range(cfg.max_steps):
                g = _margin_direction(teacher, z, cur)
                gn = np.linalg.norm(g)
                if not np.isfinite(gn) or gn == 0.0:
                    break
                z_next = z + (cfg.step_size / gn) * g
                if int(f(z_next)[0] >= 0.5) != cur:
                    z_prev, z = z, z_next
                    break
                z = z_next
        if z_prev is None:
            continue
        x_cf = _overshoot(teacher, f, z_prev, z, cur, cfg)
        return CfePair(x.copy(), x_cf, int(y), 1 - int(y), float(np.linalg.norm(x - x_cf)),
                       float(f(x_cf)[0]))
    raise CfeNotFound(f"no class flip from {x} within {cfg.max_steps} steps x {cfg.restarts + 1} starts")


def _overshoot(teacher, f, z_in, z_out, cur, cfg):
    star = refine_to_boundary(teacher, z_in, z_out, cfg.bisection_tol)
    d = z_out - z_in
    d = d / np.linalg.norm(d)
    delta = cfg.overshoot_delta
    reach = np.linalg.norm(z_out - star)
    while delta <= reach:
        cand = star + delta * d
        if int(f(cand)[0] >= 0.5) != cur:
            return cand
        delta *= 2.0
    return z_out.copy()


def validate_flip(teacher, pair):
    f = _prob_fn(teacher)
    return bool((f(pair.x)[0] >= 0.5) != (f(pair.x_cf)[0] >= 0.5))


def build_cfe_dataset(teacher, d_k, cfg=None, max_failure_rate=0.2):
    """Originals followed by their counterfactuals (labelled 1 - y).

    ``train_set.meta`` holds ``pair_index`` (original row, CFE row) and the
    list of originals for which no counterfactual was found.
    """
    cfg = cfg or CfeConfig()
    n = len(d_k)
    pairs, failures = [], []
    for i in range(n):
        try:
            p = generate_cfe(teacher, d_k.features[i], d_k.labels[i], cfg, make_rng(cfg.seed, 10, i))
        except CfeNotFound:
            failures.append(i)
            continue
        p.source_index = i
        pairs.append(p)
    if n and len(failures) > max_failure_rate * n:
        raise CfeNotFound(f"{len(failures)}/{n} originals produced no counterfactual")
    if pairs:
        cf = Dataset(np.array([p.x_cf for p in pairs]), np.array([p.y_cf for p in pairs]))
        train = Dataset.concat(d_k, cf)
    else:
        train = Dataset(d_k.features.copy(), d_k.labels.copy(), d_k.seed)
    train.meta["pair_index"] = [(p.source_index, n + j) for j, p in enumerate(pairs)]
    train.meta["cfe_failures"] = failures
    return train, pairs


def pairs_to_csv(pairs, path):
    d = len(pairs[0].x) if pairs else 2
    header = [f"x{i + 1}" for i in range(d)] + [f"xcf{i + 1}" for i in range(d)] + \
        ["y", "ycf", "perturb_norm", "prob_at_cf"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for p in pairs:
            w.writerow([fmt(v) for v in p.x] + [fmt(v) for v in p.x_cf] +
                       [p.y, p.y_cf, fmt(p.perturbation_norm), fmt(p.teacher_prob_at_cf)])


def pairs_from_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    d = (len(rows[0]) - 4) // 2
    out = []
    for r in rows[1:]:
        v = [float(t) for t in r]
        out.append(CfePair(np.array(v[:d]), np.array(v[d:2 * d]), int(v[2 * d]), int(v[2 * d + 1]),
                           v[2 * d + 2], v[2 * d + 3]))
    return out
