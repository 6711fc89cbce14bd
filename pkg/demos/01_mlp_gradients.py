"""A small MLP from scratch: forward pass, exact gradients, a finite-difference check.

Run: python3 demos/01_mlp_gradients.py
"""
import numpy as np

from cod.data import make_rng
from cod.distill import batch_objective
from cod.nn import LossWeights, MlpModel, MlpSpec, forward

rng = make_rng(0)
teacher = MlpModel.init(MlpSpec((2, 8, 2), "relu"), rng)
student = MlpModel.init(MlpSpec((2, 4, 2), "tanh"), rng)
X = rng.normal(size=(5, 2))
y = np.array([0, 1, 1, 0, 1])

tr = forward(student, X)
print("student class-1 probabilities:", np.round(tr.prob1, 4))

# hard loss + KL to the teacher + hidden-layer matching through a projection
weights = LossWeights(alpha=1.0, beta=0.5)
proj = rng.normal(size=(8, 4))
targets = forward(teacher, X).probs
parts, grads, _ = batch_objective(student, X, y, targets, weights, teacher, proj)
print("loss parts:", {k: round(v, 6) for k, v in parts.items()})

# central differences on one weight matrix
W = student.weights[0]
h = 1e-5
num = np.zeros_like(W)
for idx in np.ndindex(W.shape):
    old = W[idx]
    W[idx] = old + h
    up = batch_objective(student, X, y, targets, weights, teacher, proj)[0]["total"]
    W[idx] = old - h
    dn = batch_objective(student, X, y, targets, weights, teacher, proj)[0]["total"]
    W[idx] = old
    num[idx] = (up - dn) / (2 * h)
print("max |analytic - numeric| on W0:", np.abs(num - grads.weights[0]).max())
