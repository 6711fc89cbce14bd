"""Counterfactual-infused distillation loop and its baselines.

The student minimises ``hard + alpha * kd + beta * lwd`` where ``hard`` is
cross-entropy on the labels, ``kd`` is KL(teacher || student) on the soft
targets and ``lwd`` matches the last hidden layers through a learned linear
projection.  Each original and its counterfactual are kept in the same
mini-batch when ``pair_coupling`` is on.
"""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .data import fmt, make_rng
from .errors import ConfigError, TrainingDiverged, ValidationError
from .nn import (LossWeights, backward, cross_entropy, forward, kl_div, lwd_grad, make_optimizer,
                 optimizer_step)

SOFT_LABEL_MODES = ("teacher", "none", "random")


@dataclass
class DistillConfig:
    loss_weights: LossWeights = field(default_factory=LossWeights)
    lr: float = 0.05
    epochs: int = 500
    batch_size: int = None  # None means full batch
    pair_coupling: bool = True
    soft_label_mode: str = "teacher"
    seed: int = 0
    optimizer: str = "adam"

    def __post_init__(self):
        if isinstance(self.loss_weights, dict):
            self.loss_weights = LossWeights(**self.loss_weights)
        if self.epochs < 1:
            raise ValidationError("epochs must be >= 1")
        if self.lr < 0:
            raise ValidationError("learning rate must be nonnegative")
        if self.soft_label_mode not in SOFT_LABEL_MODES:
            raise ConfigError(f"unknown soft_label_mode {self.soft_label_mode!r}")
        if self.soft_label_mode == "none" and self.loss_weights.alpha > 0:
            raise ConfigError("soft_label_mode='none' requires alpha = 0")
        if self.batch_size is not None:
            if self.batch_size < 1 or (self.pair_coupling and self.batch_size < 2):
                raise ConfigError("batch_size must be >= 2 with pair coupling (>= 1 otherwise)")


@dataclass
class TrainHistory:
    hard: list = field(default_factory=list)
    kd: list = field(default_factory=list)
    lwd: list = field(default_factory=list)
    total: list = field(default_factory=list)
    final_residual: float = float("nan")
    projection: np.ndarray = field(default=None, repr=False)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "hard", "kd", "lwd", "total"])
            for e, row in enumerate(zip(self.hard, self.kd, self.lwd, self.total)):
                w.writerow([e] + [fmt(v) for v in row])


def _point_key(x):
    return int.from_bytes(hashlib.blake2b(np.ascontiguousarray(x, dtype=np.float64).tobytes(),
                                          digest_size=8).digest(), "little")


def soft_targets(teacher, x, mode="teacher", seed=0):
    """Distillation targets for a batch of points.

    ``random`` draws p1 ~ U(0, 1) from a stream keyed on (seed, point bytes),
    so a point gets the same target every time it is queried with that seed.
    ``none`` yields no targets; the caller must run with alpha = 0.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if mode == "teacher":
        out = forward(teacher, X).probs
    elif mode == "random":
        u = np.array([make_rng(seed, 20, _point_key(row) >> 1).random() for row in X])
        out = np.column_stack([1.0 - u, u])
    elif mode == "none":
        return None
    else:
        raise ConfigError(f"unknown soft_label_mode {mode!r}")
    return out[0] if single else out


def _pair_index(train_set, pairs):
    if not pairs:
        return []
    first = pairs[0]
    if isinstance(first, tuple):
        return [tuple(map(int, p)) for p in pairs]
    return list(train_set.meta.get("pair_index", []))


def make_batches(train_set, pairs, batch_size, pair_coupling, seed, epoch=0):
    """Row-index batches for one epoch.

    With coupling each (original, counterfactual) pair is an indivisible unit;
    units are shuffled and packed greedily so no pair is split across batches.
    """
    n = len(train_set)
    if batch_size is None:
        batch_size = n + n % 2 if n else 2
    if pair_coupling and batch_size % 2:
        raise ConfigError("batch_size must be even when pairs are coupled")
    rng = make_rng(seed, 30, epoch)
    if not pair_coupling:
        perm = rng.permutation(n)
        return [perm[i:i + batch_size] for i in range(0, n, batch_size)]
    linked = _pair_index(train_set, pairs)
    in_pair = {i for p in linked for i in p}
    units = [list(p) for p in linked] + [[i] for i in range(n) if i not in in_pair]
    batches, cur = [], []
    for u in rng.permutation(len(units)):
        unit = units[u]
        if cur and len(cur) + len(unit) > batch_size:
            batches.append(np.array(cur, dtype=np.int64))
            cur = []
        cur.extend(unit)
    if cur:
        batches.append(np.array(cur, dtype=np.int64))
    return batches


def batch_objective(student, X, y, targets=None, weights=None, teacher=None, proj=None):
    """Loss parts and gradients for one batch.

    Returns ``(parts, grads, proj_grad)`` where ``parts`` has keys hard, kd,
    lwd, total and ``grads`` are parameter gradients of ``total``.
    """
    weights = weights or LossWeights(0.0, 0.0)
    n = len(y)
    tr = forward(student, X)
    ps = tr.probs
    onehot = np.eye(2)[y]
    hard = float(np.mean(cross_entropy(ps, y)))
    g = (ps - onehot) / n
    kd = 0.0
    if targets is not None:
        kd = float(np.mean(kl_div(targets, ps)))
        if weights.alpha:
            g = g + weights.alpha * (ps - targets) / n
    lwd, hidden_grads, proj_grad = 0.0, None, None
    if weights.beta:
        lwd, hg, pg = lwd_grad(forward(teacher, X), tr, proj)
        hidden_grads = {k: weights.beta * v for k, v in hg.items()}
        proj_grad = weights.beta * pg[0]
    total = hard + weights.alpha * kd + weights.beta * lwd
    return {"hard": hard, "kd": kd, "lwd": lwd, "total": total}, backward(student, tr, g, hidden_grads), proj_grad


def init_projection(teacher, student, rng):
    t_dim = teacher.spec.layer_sizes[-2]
    s_dim = student.spec.layer_sizes[-2]
    bound = np.sqrt(1.0 / s_dim)
    return rng.uniform(-bound, bound, size=(t_dim, s_dim))


def distill(teacher, student, train_set, pairs=(), cfg=None, projection=None):
    """Train a copy of ``student`` against ``teacher``; returns (student, history).

    A learned projection for the hidden-layer term is created when beta > 0
    and none is given; the trained projection ends up in
    ``history.projection``.
    """
    cfg = cfg or DistillConfig()
    if student.spec.input_dim != teacher.spec.input_dim:
        raise ValidationError("student and teacher input dimensions differ")
    w = cfg.loss_weights
    student = student.copy()
    X, y = train_set.features, train_set.labels
    targets = soft_targets(teacher, X, cfg.soft_label_mode, cfg.seed) if len(X) else None
    proj = None
    if w.beta:
        proj = (np.array(projection, dtype=np.float64) if projection is not None
                else init_projection(teacher, student, make_rng(cfg.seed, 31)))
    opt = make_optimizer(cfg.optimizer, cfg.lr) if cfg.lr > 0 else None
    hist = TrainHistory()
    for epoch in range(cfg.epochs):
        sums = dict.fromkeys(("hard", "kd", "lwd", "total"), 0.0)
        for idx in make_batches(train_set, pairs, cfg.batch_size, cfg.pair_coupling, cfg.seed, epoch):
            parts, grads, pgrad = batch_objective(
                student, X[idx], y[idx], None if targets is None else targets[idx], w, teacher, proj)
            if not np.isfinite(parts["total"]):
                raise TrainingDiverged("non-finite loss", epoch)
            for k in sums:
                sums[k] += parts[k] * len(idx)
            if opt is not None:
                try:
                    optimizer_step(student, grads, opt,
                                   [proj] if proj is not None else (), [pgrad] if proj is not None else ())
                except TrainingDiverged as exc:
                    raise TrainingDiverged("non-finite gradient", epoch) from exc
        n = max(len(X), 1)
        hist.hard.append(sums["hard"] / n)
        hist.kd.append(sums["kd"] / n)
        hist.lwd.append(sums["lwd"] / n)
        hist.total.append(sums["total"] / n)
    if len(X):
        fs = forward(student, X).probs[:, 1]
        ft = forward(teacher, X).probs[:, 1]
        hist.final_residual = float(np.max(np.abs(fs - ft)))
    hist.projection = proj
    return student, hist


def fit_classifier(model, ds, lr=0.01, epochs=1000, batch_size=None, seed=0, optimizer="adam"):
    """Plain cross-entropy training (used for the teacher); returns a trained copy."""
    model = model.copy()
    opt = make_optimizer(optimizer, lr)
    n = len(ds)
    bs = batch_size or n
    for epoch in range(epochs):
        perm = make_rng(seed, 32, epoch).permutation(n) if bs < n else np.arange(n)
        for i in range(0, n, bs):
            idx = perm[i:i + bs]
            parts, grads, _ = batch_objective(model, ds.features[idx], ds.labels[idx])
            if not np.isfinite(parts["total"]):
                raise TrainingDiverged("non-finite loss", epoch)
            optimizer_step(model, grads, opt)
    return model


def accuracy(model, ds):
    return float(np.mean((forward(model, ds.features).probs[:, 1] >= 0.5).astype(np.int64) == ds.labels))
