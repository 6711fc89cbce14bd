import csv
import hashlib
import json
import statistics

import numpy as np
import pytest

from cod.cli import main
from cod.errors import ConfigError
from cod.harness import ExperimentConfig, load_config, run

SMALL = {"data": {"n": 400, "test_n": 400}, "teacher": {"epochs": 150}, "geometry": {"resolution": 32},
         "distill": {"epochs": 80}, "bound": {"epochs": 80}, "k": 8, "seeds": [0, 1],
         "fisher": {"trials": 30}, "ablation": {"ks": [8]}}


def small(experiment, out, **extra):
    d = json.loads(json.dumps(SMALL))
    d.update(experiment=experiment, output_dir=str(out), **extra)
    return ExperimentConfig.from_dict(d)


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_config_precedence(tmp_path):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"k": 10, "seeds": [3], "data": {"noise": 0.25}}))
    cfg = load_config(f, {"k": 12, "seeds": None})
    assert cfg.k == 12 and cfg.seeds == [3] and cfg.data.noise == 0.25 and cfg.data.n == 2000
    assert load_config(None).k == 20


def test_config_errors():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"data": {"bogus": 1}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"seeds": [1, 1]})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"experiment": "other"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"distill": {"loss_weights": {"alpha": 1.0}, "soft_label_mode": "none"}})


def test_config_echo_roundtrip():
    cfg = ExperimentConfig.from_dict({"k": 12, "cfe": {"jitter": 0.1}})
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()


@pytest.fixture(scope="module")
def moons_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("moons")
    return small("moons", out), run(small("moons", out)), out


def test_moons_outputs(moons_run):
    cfg, summary, out = moons_run
    assert len(summary.per_seed) == 2
    for seed in (0, 1):
        for name in ("teacher", "standard", "cod"):
            lines = (out / f"seed_{seed}" / f"grid_{name}.csv").read_text().splitlines()
            assert lines[0] == "x1,x2,p1" and len(lines) - 1 == 32 ** 2
    assert json.loads((out / "summary.json").read_text())["experiment"] == "moons"


def test_manifest_checksums(moons_run):
    _, _, out = moons_run
    man = json.loads((out / "manifest.json").read_text())
    assert "metrics.csv" in man["artifacts"]
    for rel, digest in man["artifacts"].items():
        assert hashlib.sha256((out / rel).read_bytes()).hexdigest() == digest
    assert ExperimentConfig.from_dict(man["config"]).to_dict() == man["config"]


def test_aggregates_recomputable(moons_run):
    _, summary, out = moons_run
    rows = read_rows(out / "metrics.csv")
    for key in ("h_cod", "h_standard", "cod_acc", "standard_acc"):
        vals = [float(r[key]) for r in rows]
        assert abs(statistics.median(vals) - summary.aggregate[f"{key}_median"]) <= 1e-12
        assert abs(np.mean(vals) - summary.aggregate[f"{key}_mean"]) <= 1e-12


def test_moons_without_cod_arm(tmp_path):
    s = run(small("moons", tmp_path, arms={"standard": True, "cod": False}, seeds=[0], write_grids=False))
    row = s.per_seed[0]
    assert "standard_acc" in row and "h_standard" in row and "teacher_acc" in row
    assert "cod_acc" not in row and "h_cod" not in row


def test_seed_failure_is_isolated(tmp_path):
    s = run(small("moons", tmp_path, cfe={"max_steps": 1, "restarts": 0, "step_size": 1e-6}, seeds=[0, 1]))
    assert len(s.per_seed) == 2
    assert all("error" in r for r in s.per_seed)
    assert s.aggregate["n_failed_seeds"] == 2


@pytest.mark.parametrize("experiment", ["moons", "fisher", "bound", "ablation"])
def test_rerun_is_bitwise_identical(tmp_path, experiment):
    a = run(small(experiment, tmp_path / "a", seeds=[0]))
    b = run(small(experiment, tmp_path / "b", seeds=[0]))
    assert a.aggregate == b.aggregate
    for rel in a.artifacts:
        if rel.endswith(".csv"):
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel


def test_fisher_degenerate_control(tmp_path):
    s = run(small("fisher", tmp_path, fisher={"trials": 1, "cf_fraction": 0.0}))
    assert all(r["ratio"] == 1.0 for r in s.per_seed)
    d = json.loads((tmp_path / "seed_0" / "thm1.json").read_text())
    assert d["ratio"] == 1.0 and d["trials"] == 1


def test_bound_control_and_cross_file(tmp_path):
    s = run(small("bound", tmp_path))
    for r in s.per_seed:
        assert r["control_h"] == 0.0 and r["control_satisfied"]
        rep = json.loads((tmp_path / f"seed_{r['seed']}" / "bound.json").read_text())
        assert rep["alpha"] == r["alpha"] and rep["epsilon"] == r["epsilon"]
        pairs = read_rows(tmp_path / f"seed_{r['seed']}" / "pairs.csv")
        assert max(float(p["perturb_norm"]) for p in pairs) == r["alpha"]
    assert s.aggregate["control_satisfied_count"] == 2


def test_ablation_cells(tmp_path):
    s = run(small("ablation", tmp_path, ablation={"ks": [8, 16, 32]}, seeds=[0]))
    assert len(s.aggregate["cells"]) == 9
    assert all(r["alpha"] == 0.0 for r in s.per_seed if r["mode"] == "none")


def test_ablation_teacher_beats_random(tmp_path):
    # default ablation, 5 seeds: teacher soft labels at least as accurate as
    # random ones at every k in >= 4/5 seeds, in both arms
    s = run(ExperimentConfig.from_dict({"experiment": "ablation", "output_dir": str(tmp_path)}))
    rows = [r for r in s.per_seed if "error" not in r]
    short = []
    for k in (8, 16, 32):
        for arm in ("standard_acc", "cod_acc"):
            by = {}
            for r in rows:
                if r["k"] == k:
                    by.setdefault(r["seed"], {})[r["mode"]] = r[arm]
            wins = sum(v["teacher"] >= v["random"] for v in by.values())
            print(f"ablation k={k} {arm}: teacher >= random in {wins}/{len(by)} seeds")
            if wins < 4:
                short.append((k, arm, wins))
    assert not short


def test_cli_success_and_error(tmp_path, capsys):
    cfgf = tmp_path / "c.json"
    d = dict(SMALL, seeds=[0], fisher={"trials": 5})
    cfgf.write_text(json.dumps(d))
    assert main(["fisher", "--config", str(cfgf), "--out", str(tmp_path / "o"), "--seed", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["experiment"] == "fisher"
    assert json.loads((tmp_path / "o" / "summary.json").read_text())["per_seed"][0]["seed"] == 2
    assert main(["moons", "--config", str(cfgf), "--k", "7", "--out", str(tmp_path / "bad")]) != 0
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError"
