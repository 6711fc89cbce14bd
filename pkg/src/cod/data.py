"""Synthetic datasets: two moons, logistic ground truth, boundary samples.

All generators are pure functions of their arguments.  Randomness comes from
numpy's PCG64 bit generator seeded through ``SeedSequence([seed, *stream])``,
so ``make_rng(seed, 3)`` and ``make_rng(seed, 4)`` are independent streams
that are still fully determined by ``seed``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GenerationError, SamplingError, ValidationError


def make_rng(seed, *stream):
    """PCG64 generator for ``seed`` and an optional integer substream path."""
    key = [int(seed), *(int(s) for s in stream)]
    if any(k < 0 for k in key):
        raise ValidationError("seeds and stream ids must be nonnegative integers")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    seed: int = None
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels).astype(np.int64)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValidationError("features must be N x d and labels length N")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValidationError("labels must be 0/1")
        if not np.all(np.isfinite(self.features)):
            raise ValidationError("features must be finite")

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.seed)

    def class_counts(self):
        return np.bincount(self.labels, minlength=2)

    @staticmethod
    def empty(dim):
        return Dataset(np.zeros((0, dim)), np.zeros(0, dtype=np.int64))

    @staticmethod
    def concat(a, b):
        return Dataset(np.vstack([a.features, b.features]), np.concatenate([a.labels, b.labels]), a.seed)


def fmt(x):
    """Shortest round-tripping, locale-independent float text."""
    return repr(float(x))


def dataset_to_csv(ds, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{i + 1}" for i in range(ds.dim)] + ["label"])
        for x, y in zip(ds.features, ds.labels):
            w.writerow([fmt(v) for v in x] + [int(y)])


def dataset_from_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[-1] != "label":
        raise ValidationError("last CSV column must be 'label'")
    d = len(header) - 1
    feats = np.array([[float(v) for v in r[:d]] for r in body], dtype=np.float64).reshape(-1, d)
    labels = np.array([int(r[d]) for r in body], dtype=np.int64)
    return Dataset(feats, labels)


def gen_moons(n=2000, noise=0.2, seed=0):
    """Two interleaving half circles, n/2 points per class, class 0 first.

    Class 0 sits on (cos t, sin t), class 1 on (1 - cos t, 0.5 - sin t), with
    t on an evenly spaced grid over [0, pi].  Gaussian noise of std ``noise``
    is added to each coordinate.
    """
    if n < 2 or n % 2:
        raise ValidationError(f"n must be a positive even integer, got {n}")
    if noise < 0:
        raise ValidationError("noise must be nonnegative")
    m = n // 2
    t = np.linspace(0.0, np.pi, m)
    c0 = np.column_stack([np.cos(t), np.sin(t)])
    c1 = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    x = np.vstack([c0, c1])
    if noise > 0:
        x = x + make_rng(seed).normal(0.0, noise, size=x.shape)
    y = np.repeat([0, 1], m)
    return Dataset(x, y, seed)


@dataclass
class LogisticGroundTruth:
    """Teacher weights over raw features with the bias stored last."""
    w_t: np.ndarray

    def __post_init__(self):
        self.w_t = np.asarray(self.w_t, dtype=np.float64)
        if self.w_t.ndim != 1 or self.w_t.size < 2:
            raise ValidationError("w_t must be a vector of length d+1")
        if not np.all(np.isfinite(self.w_t)) or not np.any(self.w_t):
            raise ValidationError("w_t must be finite and nonzero")

    @property
    def dim(self):
        return self.w_t.size - 1

    def margin(self, raw):
        return augment(raw) @ self.w_t


def augment(raw):
    """Append the constant bias coordinate."""
    raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    return np.hstack([raw, np.ones((raw.shape[0], 1))])


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class IsotropicGaussian:
    dim: int
    scale: float = 1.0

    def __call__(self, rng, n):
        return rng.normal(0.0, self.scale, size=(n, self.dim))


def _draw(x_sampler, truth, rng, n):
    sampler = x_sampler if x_sampler is not None else IsotropicGaussian(truth.dim)
    x = np.asarray(sampler(rng, n), dtype=np.float64)
    if x.shape != (n, truth.dim):
        raise ValidationError(f"sampler returned shape {x.shape}, expected {(n, truth.dim)}")
    return x


def gen_logistic(truth, n, x_sampler=None, seed=0):
    """Raw features from ``x_sampler(rng, n)``; labels ~ Bernoulli(sigmoid(w_t . [x; 1]))."""
    rng = make_rng(seed, 1)
    x = _draw(x_sampler, truth, rng, n)
    p = sigmoid(truth.margin(x))
    y = (rng.random(n) < p).astype(np.int64)
    return Dataset(x, y, seed)


def gen_boundary_cfes(truth, n, x_sampler=None, seed=0):
    """Points on the teacher hyperplane with Bernoulli(0.5) labels.

    Each raw draw is projected orthogonally onto w_t . [x; 1] = 0 and then
    rescaled to its original norm.  ``meta`` records the largest relative
    offset |w_t . [x; 1]| / ||w_t|| before and after rescaling.
    """
    w_raw, b = truth.w_t[:-1], truth.w_t[-1]
    wn2 = float(w_raw @ w_raw)
    if wn2 == 0.0:
        raise GenerationError("w_t has a zero raw part: the decision boundary is empty or everything")
    rng = make_rng(seed, 2)
    x = _draw(x_sampler, truth, rng, n)
    proj = x - ((x @ w_raw + b) / wn2)[:, None] * w_raw
    wnorm = float(np.linalg.norm(truth.w_t))
    pre = np.abs(truth.margin(proj)) / wnorm if n else np.zeros(0)
    if np.any(pre > 1e-9):
        raise GenerationError("projection failed to land on the hyperplane")
    r_in = np.linalg.norm(x, axis=1)
    r_p = np.linalg.norm(proj, axis=1)
    scale = np.divide(r_in, r_p, out=np.ones_like(r_in), where=r_p > 0)
    xc = proj * scale[:, None]
    post = np.abs(truth.margin(xc)) / wnorm if n else np.zeros(0)
    y = (rng.random(n) < 0.5).astype(np.int64)
    meta = {"max_offset_pre": float(pre.max(initial=0.0)), "max_offset_post": float(post.max(initial=0.0))}
    return Dataset(xc, y, seed, meta)


def second_moment_residual(a, b):
    """||E[aa^T] - E[bb^T]||_F / ||E[aa^T]||_F over augmented rows."""
    A, B = augment(a), augment(b)
    ma = A.T @ A / len(A)
    mb = B.T @ B / len(B)
    return float(np.linalg.norm(ma - mb) / np.linalg.norm(ma))


def few_shot_sample(ds, k, seed=0):
    """Balanced k-shot subset: k/2 per class without replacement, class 0 first."""
    if k < 2 or k % 2:
        raise ValidationError(f"k must be a positive even integer, got {k}")
    half = k // 2
    rng = make_rng(seed, 3)
    picks = []
    for c in (0, 1):
        idx = np.flatnonzero(ds.labels == c)
        if idx.size < half:
            raise SamplingError(f"class {c} has {idx.size} points, need {half}")
        picks.append(np.sort(rng.choice(idx, size=half, replace=False)))
    out = ds.subset(np.concatenate(picks))
    out.meta["indices"] = np.concatenate(picks)
    return out
