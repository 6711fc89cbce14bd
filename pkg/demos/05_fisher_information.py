"""Fisher information of logistic regression and boundary samples.

Points on the decision boundary get the largest per-sample weight
sigma(1 - sigma) = 0.25, but only along directions inside the boundary.
This demo fits MLEs with and without boundary samples and compares both the
estimation error and tr(FIM^-1).

Run: python3 demos/05_fisher_information.py
"""
import numpy as np

from cod.data import LogisticGroundTruth, augment, gen_boundary_cfes, gen_logistic, second_moment_residual
from cod.fisher import fit_mle, logistic_fim, thm1_experiment, trace_inverse

truth = LogisticGroundTruth([1.0, -1.0, 0.0])
std = gen_logistic(truth, 2000, seed=0)
cfs = gen_boundary_cfes(truth, 2000, seed=0)
f_std = logistic_fim(truth.w_t, augment(std.features))
f_cf = logistic_fim(truth.w_t, augment(cfs.features))
print("per-point FIM, standard:\n", np.round(f_std.m / 2000, 4))
print("per-point FIM, boundary:\n", np.round(f_cf.m / 2000, 4))
print("boundary FIM along w_t:", float(truth.w_t @ f_cf.m @ truth.w_t))
print("second-moment residual:", round(second_moment_residual(std.features, cfs.features), 3))

r = fit_mle(gen_logistic(truth, 50_000, seed=1))
print("MLE at n=50000:", np.round(r.w_hat, 3), "converged", r.converged)

rep = thm1_experiment(truth, k=16, trials=500, seed=0)
print(f"k=16, 500 trials: mse standard {rep.mse_standard:.3f}, mixed {rep.mse_cf:.3f}, ratio {rep.ratio:.3f} "
      f"CI {np.round(rep.ci95_ratio, 3)}")
print(f"mean tr(FIM^-1): standard {rep.trace_inv_standard:.3f}, mixed {rep.trace_inv_cf:.3f}")
print("trace_inverse(I_3) =", trace_inverse(np.eye(3)))
