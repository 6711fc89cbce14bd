"""Counterfactual explanations for a teacher trained on two moons.

Each few-shot point is pushed along the teacher's logit margin until the
predicted class flips; the result sits just past the 0.5 level set.

Run: python3 demos/02_counterfactuals.py
"""
import numpy as np

from cod.cfe import CfeConfig, build_cfe_dataset
from cod.data import few_shot_sample, gen_moons, make_rng
from cod.distill import accuracy, fit_classifier
from cod.geometry import crossings_for_pairs
from cod.nn import MlpModel, MlpSpec, prob1

data = gen_moons(2000, noise=0.1, seed=0)
teacher = fit_classifier(MlpModel.init(MlpSpec((2, 64, 64, 2)), make_rng(0, 50)), data, lr=0.01, epochs=600)
print(f"teacher training accuracy: {accuracy(teacher, data):.3f}")

originals = few_shot_sample(data, 10, seed=0)
train, pairs = build_cfe_dataset(teacher, originals, CfeConfig())
print(f"{len(pairs)} counterfactuals, {len(train)} training points")
for p in pairs[:5]:
    print(f"  x={np.round(p.x, 3)} y={p.y} -> x_cf={np.round(p.x_cf, 3)} y_cf={p.y_cf} "
          f"|dx|={p.perturbation_norm:.3f} f(x_cf)={p.teacher_prob_at_cf:.4f}")

# the straight segment from x to x_cf crosses the teacher boundary
xs = crossings_for_pairs(teacher, pairs)
print("max |f(crossing) - 0.5|:", np.abs(prob1(teacher, xs) - 0.5).max())
