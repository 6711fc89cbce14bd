"""Teacher soft labels vs no soft labels vs random soft labels, at k = 8, 16, 32.

Run: python3 demos/06_soft_label_ablation.py   (takes about a minute)
"""
from cod.harness import ExperimentConfig, run

summary = run(ExperimentConfig.from_dict({"experiment": "ablation", "output_dir": "runs/ablation_demo"}))
print("cell           standard  cod")
for name, cell in summary.aggregate["cells"].items():
    print(f"{name:<14} {cell['standard_acc_mean']:.3f}     {cell['cod_acc_mean']:.3f}")
print("seeds where teacher >= random (cod arm):", summary.aggregate["teacher_ge_random_cod"])
