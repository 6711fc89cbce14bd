"""Decision-boundary geometry in 2-D.

Level sets are sampled by marching-squares style edge crossings on a regular
grid, each refined by bisection along its grid edge.  Hausdorff distances are
exact over the resulting finite point sets.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .cfe import _prob_fn, refine_to_boundary
from .data import fmt
from .errors import UndefinedDistanceError, ValidationError
from .nn import MlpModel

_EDGE_BISECT_ITERS = 80


@dataclass
class Region:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if self.lower.shape != self.upper.shape or not np.all(self.lower < self.upper):
            raise ValidationError("region needs lower < upper componentwise")

    @property
    def diagonal(self):
        return float(np.linalg.norm(self.upper - self.lower))

    def contains(self, pts):
        pts = np.atleast_2d(pts)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)


def region_from_data(features, pad=0.1):
    """Bounding box of ``features`` widened by ``pad`` times its extent on each side."""
    lo, hi = features.min(axis=0), features.max(axis=0)
    ext = hi - lo
    return Region(lo - pad * ext, hi + pad * ext)


@dataclass
class BoundarySet:
    points: np.ndarray
    source_model_id: str
    region: Region
    grid_resolution: int
    level_tol: float = 1e-6
    meta: dict = field(default_factory=dict, repr=False)

    @property
    def is_empty(self):
        return len(self.points) == 0

    def __len__(self):
        return len(self.points)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x1", "x2"])
            for p in self.points:
                w.writerow([fmt(p[0]), fmt(p[1])])


def _model_id(model):
    return model.fingerprint()[:16] if isinstance(model, MlpModel) else getattr(model, "__name__", "callable")


def grid_nodes(region, resolution):
    if region.lower.size != 2:
        raise ValidationError("grids are only defined for 2-D regions")
    xs = np.linspace(region.lower[0], region.upper[0], resolution)
    ys = np.linspace(region.lower[1], region.upper[1], resolution)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return xs, ys, np.column_stack([gx.ravel(), gy.ravel()])


def probability_grid(model, region, resolution):
    """(resolution**2, 3) array of x1, x2, class-1 probability."""
    _, _, nodes = grid_nodes(region, resolution)
    return np.column_stack([nodes, _prob_fn(model)(nodes)])


def grid_to_csv(grid, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "x2", "p1"])
        for row in grid:
            w.writerow([fmt(v) for v in row])


def extract_boundary(model, region, resolution=256, level_tol=1e-6, model_id=None):
    """Sample {x : f(x) = 0.5} inside ``region``.

    Every grid edge whose endpoints fall on opposite sides of 0.5 contributes
    one point, bisected along the edge until |f - 0.5| <= level_tol.  Points
    that cannot reach the tolerance in floating point are dropped and counted
    in ``meta['dropped']``.
    """
    if resolution < 2:
        raise ValidationError("resolution must be >= 2")
    f = _prob_fn(model)
    xs, ys, nodes = grid_nodes(region, resolution)
    side = (f(nodes) >= 0.5).reshape(resolution, resolution)
    i, j = np.nonzero(side[:-1, :] != side[1:, :])
    a_h = np.column_stack([xs[i], ys[j]])
    b_h = np.column_stack([xs[i + 1], ys[j]])
    i, j = np.nonzero(side[:, :-1] != side[:, 1:])
    a_v = np.column_stack([xs[i], ys[j]])
    b_v = np.column_stack([xs[i], ys[j + 1]])
    a = np.vstack([a_h, a_v])
    b = np.vstack([b_h, b_v])
    pts, gaps = _bisect_edges(f, a, b, level_tol)
    keep = gaps <= level_tol
    mid = model_id or _model_id(model)
    return BoundarySet(pts[keep], mid, region, resolution, level_tol,
                       {"dropped": int((~keep).sum()), "empty": not bool(keep.any())})


def _bisect_edges(f, a, b, tol):
    m = len(a)
    if m == 0:
        return np.zeros((0, 2)), np.zeros(0)
    side_a = f(a) >= 0.5
    lo, hi = np.zeros(m), np.ones(m)
    d = b - a
    best = a.copy()
    best_gap = np.full(m, np.inf)
    active = np.ones(m, dtype=bool)
    for _ in range(_EDGE_BISECT_ITERS):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        mid = 0.5 * (lo[idx] + hi[idx])
        pts = a[idx] + mid[:, None] * d[idx]
        fm = f(pts)
        gap = np.abs(fm - 0.5)
        better = gap < best_gap[idx]
        best[idx[better]] = pts[better]
        best_gap[idx[better]] = gap[better]
        same = (fm >= 0.5) == side_a[idx]
        lo[idx[same]] = mid[same]
        hi[idx[~same]] = mid[~same]
        nxt = 0.5 * (lo[idx] + hi[idx])
        stalled = (nxt <= lo[idx]) | (nxt >= hi[idx])
        active[idx[(gap <= tol) | stalled]] = False
    return best, best_gap


@dataclass
class HausdorffReport:
    h: float
    directed_ts: float
    directed_st: float
    witness_ts: tuple
    witness_st: tuple


def _points(s):
    pts = s.points if isinstance(s, BoundarySet) else np.asarray(s, dtype=np.float64)
    pts = np.atleast_2d(pts)
    if pts.size == 0:
        raise UndefinedDistanceError("Hausdorff distance is undefined for an empty set")
    return pts


def _nearest_brute(a, b, chunk=2048):
    dist = np.empty(len(a))
    arg = np.empty(len(a), dtype=np.int64)
    for s in range(0, len(a), chunk):
        D = np.sqrt(((a[s:s + chunk, None, :] - b[None, :, :]) ** 2).sum(-1))
        arg[s:s + chunk] = D.argmin(axis=1)
        dist[s:s + chunk] = D[np.arange(D.shape[0]), arg[s:s + chunk]]
    return dist, arg


def _nearest_tree(a, b):
    # the tree proposes candidates; distances are recomputed with the brute-force
    # expression so the result is bitwise identical
    tree = cKDTree(b)
    d0, _ = tree.query(a)
    cands = tree.query_ball_point(a, d0 * (1 + 1e-9) + 1e-300, return_sorted=True)
    counts = np.array([len(c) for c in cands])
    rows = np.repeat(np.arange(len(a)), counts)
    cols = np.concatenate([np.asarray(c, dtype=np.int64) for c in cands])
    dd = np.sqrt(((a[rows] - b[cols]) ** 2).sum(-1))
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    dist = np.minimum.reduceat(dd, starts)
    arg = np.empty(len(a), dtype=np.int64)
    for r, (s, c) in enumerate(zip(starts, counts)):
        arg[r] = cols[s + int(np.argmin(dd[s:s + c]))]
    return dist, arg


def directed_hausdorff(a, b, accelerate=True):
    """sup over a of the distance to the nearest point of b, with witnesses."""
    a, b = _points(a), _points(b)
    dist, arg = (_nearest_tree if accelerate else _nearest_brute)(a, b)
    i = int(np.argmax(dist))
    return float(dist[i]), (a[i].copy(), b[arg[i]].copy())


def hausdorff(a, b, accelerate=True):
    """Symmetric Hausdorff distance; ``a`` plays the teacher in the field names."""
    d_ab, w_ab = directed_hausdorff(a, b, accelerate)
    d_ba, w_ba = directed_hausdorff(b, a, accelerate)
    return HausdorffReport(max(d_ab, d_ba), d_ab, d_ba, w_ab, w_ba)


def crossings_for_pairs(teacher, pairs, tol=1e-10):
    """Teacher 0.5-crossing on each segment [x, x_cf]."""
    return np.array([refine_to_boundary(teacher, p.x, p.x_cf, tol) for p in pairs]).reshape(len(pairs), -1)


def compute_alpha(pairs):
    if not len(pairs):
        raise ValidationError("alpha needs at least one pair")
    return float(max(p.perturbation_norm for p in pairs))


def compute_epsilon(crossings, boundary_t, boundary_s):
    """Larger of the two coverage radii of the crossings over both boundaries."""
    c = np.asarray(crossings, dtype=np.float64)
    if c.size == 0:
        raise ValidationError("epsilon needs at least one crossing")
    return max(directed_hausdorff(boundary_t, c)[0], directed_hausdorff(boundary_s, c)[0])


@dataclass
class BoundCheckReport:
    alpha: float
    epsilon: float
    h: float
    bound: float
    satisfied: bool
    slack_used: float
    n_teacher_points: int = 0
    n_student_points: int = 0

    def to_dict(self):
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else v) for k, v in asdict(self).items()}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def check_bound(teacher, student, pairs, region, resolution=256, a2_slack=0.0, level_tol=1e-6,
                crossing_tol=1e-10, boundaries=None):
    """Measure H(student, teacher) against alpha + epsilon (+ slack).

    ``boundaries`` may pass precomputed (teacher, student) BoundarySets.
    """
    if boundaries is None:
        bt = extract_boundary(teacher, region, resolution, level_tol)
        bs = extract_boundary(student, region, resolution, level_tol)
    else:
        bt, bs = boundaries
    alpha = compute_alpha(pairs)
    eps = compute_epsilon(crossings_for_pairs(teacher, pairs, crossing_tol), bt, bs)
    h = hausdorff(bt, bs).h
    bound = alpha + eps
    return BoundCheckReport(alpha, eps, h, bound, bool(h <= bound + a2_slack), float(a2_slack), len(bt), len(bs))
