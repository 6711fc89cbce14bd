"""Seeded experiment runners: moons distillation, Fisher study, boundary bound, ablation.

Each runner takes an :class:`ExperimentConfig`, processes seeds in sorted
order, writes per-seed CSV/JSON artifacts under ``output_dir`` and returns a
:class:`RunSummary` that is also written to ``summary.json``.  A
``manifest.json`` records the config echo and a SHA-256 for every artifact.
"""
from __future__ import annotations

import copy
import csv
import dataclasses
import hashlib
import json
import logging
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cfe import CfeConfig, build_cfe_dataset, pairs_to_csv
from .data import LogisticGroundTruth, dataset_to_csv, few_shot_sample, fmt, gen_boundary_cfes, gen_logistic, \
    gen_moons, make_rng, second_moment_residual
from .distill import DistillConfig, accuracy, distill, fit_classifier
from .errors import CodError, ConfigError
from .fisher import thm1_experiment
from .geometry import check_bound, extract_boundary, grid_to_csv, hausdorff, probability_grid, region_from_data
from .nn import LossWeights, MlpModel, MlpSpec, save_model

log = logging.getLogger(__name__)

EXPERIMENTS = ("moons", "fisher", "bound", "ablation")


@dataclass
class DataConfig:
    n: int = 2000
    noise: float = 0.1
    test_n: int = 2000


@dataclass
class TeacherConfig:
    layer_sizes: tuple = (2, 64, 64, 2)
    activation: str = "relu"
    lr: float = 0.01
    epochs: int = 600
    batch_size: int = None


@dataclass
class StudentConfig:
    layer_sizes: tuple = (2, 16, 2)
    activation: str = "tanh"


@dataclass
class GeometryConfig:
    resolution: int = 256
    level_tol: float = 1e-6
    pad: float = 0.1
    crossing_tol: float = 1e-10


@dataclass
class FisherConfig:
    w_t: tuple = (1.0, -1.0, 0.0)
    k: int = 16
    trials: int = 500
    cf_fraction: float = 0.5
    moment_samples: int = 10_000


@dataclass
class BoundConfig:
    alpha: float = 20.0
    epochs: int = 2000
    residual_max: float = 0.05


@dataclass
class AblationConfig:
    ks: tuple = (8, 16, 32)
    modes: tuple = ("teacher", "none", "random")
    alpha: float = 20.0


def _default_distill():
    return DistillConfig(LossWeights(1.0, 0.0), lr=0.01, epochs=1000)


@dataclass
class ExperimentConfig:
    experiment: str = "moons"
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    k: int = 20
    arms: dict = field(default_factory=lambda: {"standard": True, "cod": True})
    write_grids: bool = True
    output_dir: str = "runs/out"
    data: DataConfig = field(default_factory=DataConfig)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    student: StudentConfig = field(default_factory=StudentConfig)
    cfe: CfeConfig = field(default_factory=CfeConfig)
    distill: DistillConfig = field(default_factory=_default_distill)
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    fisher: FisherConfig = field(default_factory=FisherConfig)
    bound: BoundConfig = field(default_factory=BoundConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be a nonempty list of distinct integers")
        if self.k < 2 or self.k % 2:
            raise ConfigError("k must be a positive even integer")

    def to_dict(self):
        return _jsonable(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, d):
        return _merge(cls(), d or {})


def _merge(obj, updates):
    """Return a copy of dataclass ``obj`` with nested ``updates`` applied."""
    kwargs = {}
    for f in dataclasses.fields(obj):
        cur = getattr(obj, f.name)
        if f.name not in updates:
            kwargs[f.name] = copy.deepcopy(cur)
            continue
        new = updates[f.name]
        if dataclasses.is_dataclass(cur) and isinstance(new, dict):
            kwargs[f.name] = _merge(cur, new)
        elif isinstance(cur, tuple) and isinstance(new, list):
            kwargs[f.name] = tuple(new)
        else:
            kwargs[f.name] = new
    unknown = set(updates) - {f.name for f in dataclasses.fields(obj)}
    if unknown:
        raise ConfigError(f"unknown config keys for {type(obj).__name__}: {sorted(unknown)}")
    return type(obj)(**kwargs)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    return x


def load_config(path=None, overrides=None):
    """Defaults <- JSON file <- overrides (already-parsed flag values)."""
    d = {}
    if path:
        d = json.loads(Path(path).read_text())
    for k, v in (overrides or {}).items():
        if v is not None:
            d[k] = v
    return ExperimentConfig.from_dict(d)


@dataclass
class RunSummary:
    experiment: str
    per_seed: list
    aggregate: dict
    config: dict
    artifacts: list = field(default_factory=list)

    def to_dict(self):
        return _jsonable(dataclasses.asdict(self))


def _aggregate(rows, keys):
    out = {}
    for k in keys:
        vals = [r[k] for r in rows if r.get(k) is not None and "error" not in r]
        vals = [float(v) for v in vals if np.isfinite(v)]
        if vals:
            out[f"{k}_median"] = statistics.median(vals)
            out[f"{k}_mean"] = float(np.mean(vals))
    return out


def _write_rows(rows, cols, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in cols])


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return fmt(v)
    return v


class _Artifacts:
    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.paths = []

    def path(self, *parts):
        p = self.root.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        self.paths.append(p)
        return p

    def rel(self):
        return [str(p.relative_to(self.root)) for p in self.paths]

    def manifest(self, cfg):
        sums = {}
        for p in self.paths:
            sums[str(p.relative_to(self.root))] = hashlib.sha256(p.read_bytes()).hexdigest()
        with open(self.root / "manifest.json", "w") as fh:
            json.dump({"config": cfg.to_dict(), "artifacts": sums}, fh, indent=2, sort_keys=True)


def _derived_seed(seed, stream):
    return int(make_rng(seed, stream).integers(2**31))


def _setup_teacher(cfg, seed):
    data = gen_moons(cfg.data.n, cfg.data.noise, seed)
    test = gen_moons(cfg.data.test_n, cfg.data.noise, _derived_seed(seed, 60))
    tspec = MlpSpec(tuple(cfg.teacher.layer_sizes), cfg.teacher.activation)
    teacher = fit_classifier(MlpModel.init(tspec, make_rng(seed, 50)), data, lr=cfg.teacher.lr,
                             epochs=cfg.teacher.epochs, batch_size=cfg.teacher.batch_size, seed=seed)
    region = region_from_data(data.features, cfg.geometry.pad)
    return data, test, teacher, region


def _student_init(cfg, seed):
    return MlpModel.init(MlpSpec(tuple(cfg.student.layer_sizes), cfg.student.activation), make_rng(seed, 51))


def _cod_inputs(cfg, teacher, data, seed, k):
    d_k = few_shot_sample(data, k, seed)
    d_half = few_shot_sample(d_k, k // 2, seed)
    cfe_cfg = dataclasses.replace(cfg.cfe, seed=seed)
    train, pairs = build_cfe_dataset(teacher, d_half, cfe_cfg)
    return d_k, train, pairs


def _finish(cfg, art, rows, cols, agg_keys, extra_agg=None):
    _write_rows(rows, cols, art.path("metrics.csv"))
    agg = _aggregate(rows, agg_keys)
    agg.update(extra_agg or {})
    summary = RunSummary(cfg.experiment, rows, agg, cfg.to_dict(), art.rel())
    with open(art.path("summary.json"), "w") as fh:
        json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
    art.paths.remove(art.root / "summary.json")
    art.manifest(cfg)
    return summary


def run_moons(cfg):
    """Teacher on full moons, then standard (k originals) vs CoD (k/2 + CFEs) students."""
    art = _Artifacts(cfg.output_dir)
    geo = cfg.geometry
    rows = []
    for seed in sorted(cfg.seeds):
        row = {"seed": seed}
        try:
            data, test, teacher, region = _setup_teacher(cfg, seed)
            sd = f"seed_{seed}"
            row["teacher_acc"] = accuracy(teacher, test)
            bt = extract_boundary(teacher, region, geo.resolution, geo.level_tol)
            models = {"teacher": teacher}
            dcfg = dataclasses.replace(cfg.distill, seed=seed)
            s0 = _student_init(cfg, seed)
            d_k, train, pairs = _cod_inputs(cfg, teacher, data, seed, cfg.k)
            if cfg.arms.get("standard", True):
                st, hist = distill(teacher, s0, d_k, (), dcfg)
                models["standard"] = st
                hist.to_csv(art.path(sd, "history_standard.csv"))
                dataset_to_csv(d_k, art.path(sd, "train_standard.csv"))
                row["standard_acc"] = accuracy(st, test)
                row["h_standard"] = hausdorff(extract_boundary(st, region, geo.resolution, geo.level_tol), bt).h
            if cfg.arms.get("cod", True):
                sc, hist = distill(teacher, s0, train, pairs, dcfg)
                models["cod"] = sc
                hist.to_csv(art.path(sd, "history_cod.csv"))
                dataset_to_csv(train, art.path(sd, "train_cod.csv"))
                pairs_to_csv(pairs, art.path(sd, "pairs.csv"))
                row["cod_acc"] = accuracy(sc, test)
                row["h_cod"] = hausdorff(extract_boundary(sc, region, geo.resolution, geo.level_tol), bt).h
                row["n_pairs"] = len(pairs)
                row["cod_residual"] = hist.final_residual
            bt.to_csv(art.path(sd, "boundary_teacher.csv"))
            for name, m in models.items():
                save_model(m, art.path(sd, f"model_{name}.json"))
                if cfg.write_grids:
                    grid_to_csv(probability_grid(m, region, geo.resolution), art.path(sd, f"grid_{name}.csv"))
        except CodError as exc:
            log.warning("seed %s failed: %s", seed, exc)
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    cols = ["seed", "teacher_acc", "standard_acc", "cod_acc", "h_standard", "h_cod", "n_pairs", "cod_residual"]
    ok = [r for r in rows if "error" not in r]
    extra = {"n_failed_seeds": len(rows) - len(ok)}
    if ok and "h_cod" in ok[0] and "h_standard" in ok[0]:
        extra["cod_acc_ge_standard"] = sum(r["cod_acc"] >= r["standard_acc"] for r in ok)
        extra["cod_h_lt_standard"] = sum(r["h_cod"] < r["h_standard"] for r in ok)
    return _finish(cfg, art, rows, cols, cols[1:], extra)


def run_fisher(cfg):
    """Monte-Carlo estimation-error study per seed."""
    art = _Artifacts(cfg.output_dir)
    fc = cfg.fisher
    truth = LogisticGroundTruth(np.array(fc.w_t, dtype=np.float64))
    rows = []
    for seed in sorted(cfg.seeds):
        row = {"seed": seed}
        try:
            rep = thm1_experiment(truth, fc.k, fc.trials, seed, cf_fraction=fc.cf_fraction)
            rep.to_json(art.path(f"seed_{seed}", "thm1.json"))
            rep.rows_to_csv(art.path(f"seed_{seed}", "trials.csv"))
            std = gen_logistic(truth, fc.moment_samples, None, _derived_seed(seed, 61))
            cf = gen_boundary_cfes(truth, fc.moment_samples, None, _derived_seed(seed, 61))
            row.update({
                "ratio": rep.ratio, "ci_low": rep.ci95_ratio[0], "ci_high": rep.ci95_ratio[1],
                "mse_standard": rep.mse_standard, "mse_cf": rep.mse_cf,
                "trace_inv_standard": rep.trace_inv_standard, "trace_inv_cf": rep.trace_inv_cf,
                "frac_trace_inv_cf_lower": rep.frac_trace_inv_cf_lower, "trials": rep.trials,
                "separated_trials": rep.separated_trials,
                "second_moment_residual": second_moment_residual(std.features, cf.features),
            })
        except CodError as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    cols = ["seed", "ratio", "ci_low", "ci_high", "mse_standard", "mse_cf", "trace_inv_standard", "trace_inv_cf",
            "frac_trace_inv_cf_lower", "trials", "separated_trials", "second_moment_residual"]
    ok = [r for r in rows if "error" not in r]
    extra = {"ci_excludes_one": sum(r["ci_high"] < 1 or r["ci_low"] > 1 for r in ok),
             "ci_all_overlap": bool(ok) and max(r["ci_low"] for r in ok) <= min(r["ci_high"] for r in ok)}
    return _finish(cfg, art, rows, cols, cols[1:], extra)


def run_bound(cfg):
    """Boundary-proximity check for a CoD student plus the student = teacher control."""
    art = _Artifacts(cfg.output_dir)
    geo = cfg.geometry
    rows = []
    for seed in sorted(cfg.seeds):
        row = {"seed": seed}
        try:
            data, _, teacher, region = _setup_teacher(cfg, seed)
            sd = f"seed_{seed}"
            _, train, pairs = _cod_inputs(cfg, teacher, data, seed, cfg.k)
            dcfg = dataclasses.replace(cfg.distill, seed=seed, epochs=cfg.bound.epochs,
                                       loss_weights=LossWeights(cfg.bound.alpha, cfg.distill.loss_weights.beta))
            student, hist = distill(teacher, _student_init(cfg, seed), train, pairs, dcfg)
            bt = extract_boundary(teacher, region, geo.resolution, geo.level_tol)
            bs = extract_boundary(student, region, geo.resolution, geo.level_tol)
            rep = check_bound(teacher, student, pairs, region, geo.resolution, 0.0, geo.level_tol,
                              geo.crossing_tol, boundaries=(bt, bs))
            ctrl = check_bound(teacher, teacher.copy(), pairs, region, geo.resolution, 0.0, geo.level_tol,
                               geo.crossing_tol, boundaries=(bt, bt))
            rep.to_json(art.path(sd, "bound.json"))
            ctrl.to_json(art.path(sd, "bound_control.json"))
            pairs_to_csv(pairs, art.path(sd, "pairs.csv"))
            bt.to_csv(art.path(sd, "boundary_teacher.csv"))
            bs.to_csv(art.path(sd, "boundary_student.csv"))
            hist.to_csv(art.path(sd, "history_cod.csv"))
            row.update({"alpha": rep.alpha, "epsilon": rep.epsilon, "h": rep.h, "bound": rep.bound,
                        "satisfied": rep.satisfied, "residual": hist.final_residual,
                        "residual_ok": hist.final_residual <= cfg.bound.residual_max,
                        "control_h": ctrl.h, "control_satisfied": ctrl.satisfied})
            if not rep.satisfied:
                log.info("seed %s: bound violated (H=%.4g > %.4g), residual %.4g", seed, rep.h, rep.bound,
                         hist.final_residual)
        except CodError as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    cols = ["seed", "alpha", "epsilon", "h", "bound", "satisfied", "residual", "residual_ok", "control_h",
            "control_satisfied"]
    ok = [r for r in rows if "error" not in r]
    extra = {"satisfied_count": sum(r["satisfied"] for r in ok),
             "satisfied_with_residual_ok": sum(r["satisfied"] and r["residual_ok"] for r in ok),
             "control_satisfied_count": sum(r["control_satisfied"] for r in ok),
             "n_seeds": len(rows)}
    return _finish(cfg, art, rows, cols, ["alpha", "epsilon", "h", "bound", "residual"], extra)


def run_ablation(cfg):
    """Soft-label modes x few-shot budgets on moons, both arms."""
    art = _Artifacts(cfg.output_dir)
    ab = cfg.ablation
    rows = []
    for seed in sorted(cfg.seeds):
        try:
            data, test, teacher, _ = _setup_teacher(cfg, seed)
        except CodError as exc:
            rows.append({"seed": seed, "error": f"{type(exc).__name__}: {exc}"})
            continue
        s0 = _student_init(cfg, seed)
        for k in ab.ks:
            try:
                d_k, train, pairs = _cod_inputs(cfg, teacher, data, seed, k)
            except CodError as exc:
                for mode in ab.modes:
                    rows.append({"seed": seed, "k": k, "mode": mode, "error": f"{type(exc).__name__}: {exc}"})
                continue
            for mode in ab.modes:
                alpha = 0.0 if mode == "none" else ab.alpha
                dcfg = dataclasses.replace(cfg.distill, seed=seed, soft_label_mode=mode,
                                           loss_weights=LossWeights(alpha, cfg.distill.loss_weights.beta))
                row = {"seed": seed, "k": k, "mode": mode, "alpha": alpha}
                try:
                    st, _ = distill(teacher, s0, d_k, (), dcfg)
                    sc, _ = distill(teacher, s0, train, pairs, dcfg)
                    row["standard_acc"] = accuracy(st, test)
                    row["cod_acc"] = accuracy(sc, test)
                except CodError as exc:
                    row["error"] = f"{type(exc).__name__}: {exc}"
                rows.append(row)
    cols = ["seed", "k", "mode", "alpha", "standard_acc", "cod_acc"]
    cells = {}
    for k in ab.ks:
        for mode in ab.modes:
            sel = [r for r in rows if r.get("k") == k and r.get("mode") == mode and "error" not in r]
            cells[f"k{k}_{mode}"] = {
                "standard_acc_mean": float(np.mean([r["standard_acc"] for r in sel])) if sel else None,
                "cod_acc_mean": float(np.mean([r["cod_acc"] for r in sel])) if sel else None,
                "n": len(sel)}
    extra = {"cells": cells}
    if "teacher" in ab.modes and "random" in ab.modes:
        wins = {}
        for k in ab.ks:
            by_seed = {}
            for r in rows:
                if r.get("k") == k and "error" not in r and r["mode"] in ("teacher", "random"):
                    by_seed.setdefault(r["seed"], {})[r["mode"]] = r["cod_acc"]
            wins[f"k{k}"] = sum(v["teacher"] >= v["random"] for v in by_seed.values() if len(v) == 2)
        extra["teacher_ge_random_cod"] = wins
    return _finish(cfg, art, rows, cols, ["standard_acc", "cod_acc"], extra)


RUNNERS = {"moons": run_moons, "fisher": run_fisher, "bound": run_bound, "ablation": run_ablation}


def run(cfg):
    return RUNNERS[cfg.experiment](cfg)
