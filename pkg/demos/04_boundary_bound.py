"""How far can a distilled student boundary drift from the teacher's?

The Hausdorff distance H between the two boundaries is compared with
alpha + epsilon, where alpha is the largest counterfactual perturbation and
epsilon measures how well the counterfactual crossings cover both boundaries.
A copy of the teacher is the control (H = 0).

Run: python3 demos/04_boundary_bound.py
"""
from cod.harness import ExperimentConfig, run

summary = run(ExperimentConfig.from_dict({"experiment": "bound", "seeds": [0, 1, 2, 3],
                                          "output_dir": "runs/bound_demo"}))
for r in summary.per_seed:
    print(f"seed {r['seed']}: H={r['h']:.3f}  alpha={r['alpha']:.3f}  eps={r['epsilon']:.3f}  "
          f"bound={r['bound']:.3f}  ok={r['satisfied']}  residual={r['residual']:.3f}  control H={r['control_h']}")
