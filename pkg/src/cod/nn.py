"""Dense binary-classifier MLP with exact reverse-mode gradients.

Everything is float64 numpy.  A model is plain data (lists of arrays), the
forward pass returns a trace holding every intermediate activation, and
``backward`` turns an output-side gradient into parameter gradients.  The
same class serves as teacher and student.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputShapeError, TrainingDiverged, ValidationError

PROB_FLOOR = 1e-12
_SIMPLEX_TOL = 1e-9
ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple
    hidden_activation: str = "relu"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValidationError("an MLP needs at least an input and an output layer")
        if any(s < 1 for s in sizes):
            raise ValidationError(f"layer sizes must be positive, got {sizes}")
        if sizes[-1] != 2:
            raise ValidationError("output layer must have exactly 2 units (binary softmax)")
        if self.hidden_activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.hidden_activation!r}")

    @property
    def input_dim(self):
        return self.layer_sizes[0]

    @property
    def n_layers(self):
        return len(self.layer_sizes) - 1


@dataclass
class MlpModel:
    spec: MlpSpec
    weights: list
    biases: list

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        sizes = self.spec.layer_sizes
        if len(self.weights) != self.spec.n_layers or len(self.biases) != self.spec.n_layers:
            raise ValidationError("number of weight/bias arrays does not match the MlpSpec")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
                raise ValidationError(f"layer {l}: bad shapes {w.shape}, {b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValidationError(f"layer {l}: non-finite parameters")

    @classmethod
    def init(cls, spec, rng):
        """Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) for weights and biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
            bound = np.sqrt(1.0 / fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(spec, weights, biases)

    @classmethod
    def zeros(cls, spec):
        sizes = spec.layer_sizes
        return cls(spec,
                   [np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:])],
                   [np.zeros(o) for o in sizes[1:]])

    def params(self):
        """Parameter arrays in a fixed order (W0, b0, W1, b1, ...), by reference."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @property
    def n_params(self):
        return int(sum(p.size for p in self.params()))

    def copy(self):
        return MlpModel(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def fingerprint(self):
        h = hashlib.sha256(repr(self.spec).encode())
        for p in self.params():
            h.update(np.ascontiguousarray(p).tobytes())
        return h.hexdigest()


@dataclass
class ForwardTrace:
    """``activations[0]`` is the input batch, ``activations[l]`` the output of
    hidden layer ``l``; ``preactivations[-1]`` are the logits."""
    activations: list
    preactivations: list
    probs: np.ndarray

    @property
    def logits(self):
        return self.preactivations[-1]

    @property
    def prob1(self):
        return self.probs[:, 1]

    def hidden(self, layer):
        if not 1 <= layer < len(self.activations):
            raise ConfigError(f"no hidden layer {layer} in this trace")
        return self.activations[layer]

    @property
    def n_hidden(self):
        return len(self.activations) - 1


@dataclass
class LossWeights:
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if not (self.alpha >= 0 and self.beta >= 0):
            raise ValidationError(f"loss weights must be nonnegative, got {self}")


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _act(name, z):
    return np.maximum(z, 0.0) if name == "relu" else np.tanh(z)


def _act_grad(name, z, a):
    return (z > 0).astype(np.float64) if name == "relu" else 1.0 - a * a


def _as_batch(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.spec.input_dim:
        raise InputShapeError(f"expected inputs of dimension {model.spec.input_dim}, got shape {x.shape}")
    return x


def forward(model, x):
    a = _as_batch(model, x)
    acts, pres = [a], []
    last = model.spec.n_layers - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.T + b
        pres.append(z)
        if l < last:
            a = _act(model.spec.hidden_activation, z)
            acts.append(a)
    return ForwardTrace(acts, pres, softmax(pres[-1]))


def predict_proba(model, x):
    probs = forward(model, x).probs
    return probs[0] if np.ndim(x) == 1 else probs


def prob1(model, x):
    """Class-1 probability f(x)."""
    return predict_proba(model, x)[..., 1]


def predict(model, x):
    return (prob1(model, x) >= 0.5).astype(np.int64)


def _check_simplex(p, name):
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] != 2:
        raise ValidationError(f"{name} must be a 2-simplex vector")
    if np.any(p < -_SIMPLEX_TOL) or np.any(p > 1 + _SIMPLEX_TOL) or np.any(np.abs(p.sum(-1) - 1) > _SIMPLEX_TOL):
        raise ValidationError(f"{name} is not on the probability simplex")
    return p


def kl_div(p, q, floor=PROB_FLOOR):
    """KL(p || q) over the last axis, with q floored inside the log."""
    p = _check_simplex(p, "p")
    q = _check_simplex(q, "q")
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(np.where(p > 0, p, 1.0)) - np.log(np.maximum(q, floor))), 0.0)
    out = np.maximum(terms.sum(-1), 0.0)
    return float(out) if out.ndim == 0 else out


def cross_entropy(probs, label, floor=PROB_FLOOR):
    probs = _check_simplex(probs, "probs")
    label = np.asarray(label)
    if not np.all((label == 0) | (label == 1)):
        raise ValidationError("labels must be 0 or 1")
    picked = np.take_along_axis(probs.reshape(-1, 2), label.reshape(-1, 1).astype(np.int64), axis=1)[:, 0]
    out = -np.log(np.maximum(picked, floor))
    return float(out[0]) if probs.ndim == 1 else out


def _resolve_alignment(teacher_trace, student_trace, proj, layers):
    if layers is None:
        if teacher_trace.n_hidden < 1 or student_trace.n_hidden < 1:
            raise ConfigError("layer-wise distillation needs a hidden layer in both models")
        layers = [(teacher_trace.n_hidden, student_trace.n_hidden)]
    projs = proj if isinstance(proj, (list, tuple)) else [proj] * len(layers)
    if len(projs) != len(layers):
        raise ConfigError("need one projection per aligned layer")
    out = []
    for (lt, ls), P in zip(layers, projs):
        ht, hs = teacher_trace.hidden(lt), student_trace.hidden(ls)
        if P is None:
            if ht.shape[1] != hs.shape[1]:
                raise ConfigError(f"hidden dims differ ({hs.shape[1]} -> {ht.shape[1]}) and no projection given")
            P = np.eye(ht.shape[1])
        P = np.asarray(P, dtype=np.float64)
        if P.shape != (ht.shape[1], hs.shape[1]):
            raise ConfigError(f"projection shape {P.shape} does not map {hs.shape[1]} -> {ht.shape[1]}")
        out.append((ls, ht, hs, P))
    return out


def lwd_term(teacher_trace, student_trace, proj=None, layers=None):
    """Per-sample mean over aligned layers of ||h_t - P h_s||^2, then batch mean.

    ``layers`` is a list of (teacher_layer, student_layer) pairs; the default
    aligns the last hidden layer of each network.
    """
    loss, _, _ = lwd_grad(teacher_trace, student_trace, proj, layers)
    return loss


def lwd_grad(teacher_trace, student_trace, proj=None, layers=None):
    """LWD loss plus its gradients w.r.t. student hidden activations and projections."""
    aligned = _resolve_alignment(teacher_trace, student_trace, proj, layers)
    n = student_trace.activations[0].shape[0]
    scale = 1.0 / (len(aligned) * n)
    loss = 0.0
    hidden_grads, proj_grads = {}, []
    for ls, ht, hs, P in aligned:
        r = ht - hs @ P.T
        loss += float(np.sum(r * r)) * scale
        g = -2.0 * scale * r
        hidden_grads[ls] = hidden_grads.get(ls, 0.0) + g @ P
        proj_grads.append(g.T @ hs)
    return loss, hidden_grads, proj_grads


@dataclass
class Gradients:
    weights: list
    biases: list
    inputs: np.ndarray = field(repr=False, default=None)

    def as_list(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out


def backward(model, trace, grad_logits, hidden_grads=None):
    """Reverse-mode pass.

    ``grad_logits`` is dL/dlogits for each row of the batch (shape N x 2) and
    ``hidden_grads`` optionally maps a hidden-layer index to dL/dh for that
    layer's activations.  Returns gradients for every parameter and for the
    inputs.
    """
    hidden_grads = hidden_grads or {}
    delta = np.asarray(grad_logits, dtype=np.float64)
    if delta.ndim == 1:
        delta = delta[None, :]
    if delta.shape != trace.logits.shape:
        raise InputShapeError(f"output gradient shape {delta.shape} != logits {trace.logits.shape}")
    L = model.spec.n_layers
    gw, gb = [None] * L, [None] * L
    for l in range(L - 1, -1, -1):
        a_in = trace.activations[l]
        gw[l] = delta.T @ a_in
        gb[l] = delta.sum(axis=0)
        da = delta @ model.weights[l]
        if l > 0:
            if l in hidden_grads:
                da = da + hidden_grads[l]
            delta = da * _act_grad(model.spec.hidden_activation, trace.preactivations[l - 1], a_in)
    return Gradients(gw, gb, da)


class SGD:
    def __init__(self, lr):
        if not lr > 0:
            raise ValidationError("learning rate must be positive")
        self.lr = float(lr)

    def step(self, params, grads):
        _check_finite(grads)
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    """Adam with bias correction; defaults follow the distillation settings
    (beta2=0.98, eps=1e-6)."""

    def __init__(self, lr, beta1=0.9, beta2=0.98, eps=1e-6):
        if not lr > 0:
            raise ValidationError("learning rate must be positive")
        self.lr, self.beta1, self.beta2, self.eps = float(lr), beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads):
        _check_finite(grads)
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(name, lr):
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr)
    raise ConfigError(f"unknown optimizer {name!r}")


def _check_finite(grads):
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged("non-finite gradient")


def optimizer_step(model, grads, optimizer, extra_params=(), extra_grads=()):
    """Apply one optimiser update to ``model`` in place and return it."""
    g = grads.as_list() if isinstance(grads, Gradients) else list(grads)
    optimizer.step(model.params() + list(extra_params), g + list(extra_grads))
    return model


def model_to_dict(model):
    return {
        "layer_sizes": list(model.spec.layer_sizes),
        "activation": model.spec.hidden_activation,
        "weights": [w.tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }


def model_from_dict(d):
    spec = MlpSpec(tuple(d["layer_sizes"]), d.get("activation", "relu"))
    return MlpModel(spec, [np.array(w, dtype=np.float64).reshape(o, i) for w, i, o in
                           zip(d["weights"], spec.layer_sizes[:-1], spec.layer_sizes[1:])],
                    [np.array(b, dtype=np.float64) for b in d["biases"]])


def save_model(model, path):
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text()))
