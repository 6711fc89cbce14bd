import numpy as np
import pytest

from cod.cfe import build_cfe_dataset
from cod.data import Dataset, few_shot_sample, gen_moons, make_rng
from cod.distill import (DistillConfig, accuracy, batch_objective, distill, make_batches, soft_targets)
from cod.errors import ConfigError, ValidationError
from cod.nn import LossWeights, MlpModel, MlpSpec, forward


def _pair_set(n_pairs):
    n = 2 * n_pairs
    ds = Dataset(np.arange(2.0 * n).reshape(n, 2), [0, 1] * n_pairs)
    ds.meta["pair_index"] = [(i, n_pairs + i) for i in range(n_pairs)]
    return ds


def test_batches_pairs_of_four():
    ds = _pair_set(10)
    batches = make_batches(ds, [(i, 10 + i) for i in range(10)], 4, True, 0)
    assert [len(b) for b in batches] == [4] * 5


def test_batches_uncoupled():
    ds = Dataset(np.zeros((20, 2)), [0, 1] * 10)
    assert [len(b) for b in make_batches(ds, [], 8, False, 0)] == [8, 8, 4]


def test_coupled_pairs_share_batch_every_epoch():
    ds = _pair_set(7)
    extra = Dataset.concat(ds, Dataset(np.ones((3, 2)), [0, 1, 0]))
    extra.meta["pair_index"] = ds.meta["pair_index"]
    for epoch in range(50):
        batches = make_batches(extra, extra.meta["pair_index"], 4, True, 3, epoch)
        where = {i: k for k, b in enumerate(batches) for i in b}
        assert sorted(where) == list(range(len(extra)))
        for a, b in extra.meta["pair_index"]:
            assert where[a] == where[b]


def test_coupling_needs_even_batch():
    with pytest.raises(ConfigError):
        make_batches(_pair_set(2), [(0, 2), (1, 3)], 3, True, 0)


def test_config_validation():
    with pytest.raises(ConfigError):
        DistillConfig(LossWeights(1.0, 0.0), soft_label_mode="none")
    with pytest.raises(ConfigError):
        DistillConfig(soft_label_mode="uniform")
    with pytest.raises(ValidationError):
        DistillConfig(epochs=0)


def test_soft_targets_modes(moons_teacher):
    data, teacher = moons_teacher
    x = data.features[:5]
    np.testing.assert_array_equal(soft_targets(teacher, x, "teacher"), forward(teacher, x).probs)
    r1 = soft_targets(teacher, x, "random", 4)
    r2 = soft_targets(teacher, x[::-1], "random", 4)
    np.testing.assert_array_equal(r1, r2[::-1])
    assert soft_targets(teacher, x, "none") is None
    np.testing.assert_allclose(r1.sum(1), 1.0)


def test_zero_weights_reduce_to_cross_entropy():
    rng = make_rng(0)
    teacher = MlpModel.init(MlpSpec((2, 8, 2)), rng)
    student = MlpModel.init(MlpSpec((2, 4, 2), "tanh"), rng)
    ds = gen_moons(20, 0.1, 1)
    _, hist = distill(teacher, student, ds, (), DistillConfig(LossWeights(0.0, 0.0), lr=0.05, epochs=30))
    for h, t in zip(hist.hard, hist.total):
        assert abs(h - t) <= 1e-12


def test_loss_decomposition():
    rng = make_rng(1)
    teacher = MlpModel.init(MlpSpec((2, 8, 2)), rng)
    student = MlpModel.init(MlpSpec((2, 4, 2), "tanh"), rng)
    X = rng.normal(size=(6, 2))
    y = rng.integers(0, 2, 6)
    w = LossWeights(0.7, 0.3)
    P = rng.normal(size=(8, 4))
    parts, _, _ = batch_objective(student, X, y, forward(teacher, X).probs, w, teacher, P)
    assert abs(parts["total"] - (parts["hard"] + 0.7 * parts["kd"] + 0.3 * parts["lwd"])) <= 1e-12


def test_copy_of_teacher_has_zero_kd_under_frozen_lr():
    rng = make_rng(2)
    teacher = MlpModel.init(MlpSpec((2, 6, 2), "tanh"), rng)
    ds = gen_moons(20, 0.1, 2)
    trained, hist = distill(teacher, teacher.copy(), ds, (), DistillConfig(LossWeights(1.0, 0.0), lr=0.0,
                                                                           epochs=5))
    assert hist.kd[0] <= 1e-9
    assert max(hist.kd) <= hist.kd[0] + 1e-6
    assert trained.fingerprint() == teacher.fingerprint()
    assert hist.final_residual == 0.0


def test_distill_does_not_mutate_student():
    rng = make_rng(3)
    teacher = MlpModel.init(MlpSpec((2, 6, 2)), rng)
    student = MlpModel.init(MlpSpec((2, 4, 2)), rng)
    fp = student.fingerprint()
    distill(teacher, student, gen_moons(10, 0.1, 0), (), DistillConfig(epochs=3))
    assert student.fingerprint() == fp


def test_lwd_projection_is_learned():
    rng = make_rng(4)
    teacher = MlpModel.init(MlpSpec((2, 6, 2)), rng)
    student = MlpModel.init(MlpSpec((2, 3, 2), "tanh"), rng)
    ds = gen_moons(20, 0.1, 0)
    _, hist = distill(teacher, student, ds, (), DistillConfig(LossWeights(1.0, 1.0), lr=0.01, epochs=200))
    assert hist.projection.shape == (6, 3)
    assert hist.lwd[-1] < hist.lwd[0]


def test_history_csv(tmp_path):
    rng = make_rng(5)
    teacher = MlpModel.init(MlpSpec((2, 6, 2)), rng)
    _, hist = distill(teacher, teacher.copy(), gen_moons(10, 0.1, 0), (), DistillConfig(epochs=4))
    hist.to_csv(tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,hard,kd,lwd,total" and len(lines) == 5


def _student(seed):
    return MlpModel.init(MlpSpec((2, 16, 2), "tanh"), make_rng(seed, 51))


def test_cod_student_closer_to_teacher(moons_teacher):
    # single-seed smoke version; the 5-seed comparison lives in the acceptance suite
    data, teacher = moons_teacher
    test = gen_moons(2000, 0.1, 99)
    d20 = few_shot_sample(data, 20, 0)
    train, pairs = build_cfe_dataset(teacher, few_shot_sample(d20, 10, 0))
    cfg = DistillConfig(LossWeights(1.0, 0.0), lr=0.01, epochs=1000)
    st, _ = distill(teacher, _student(0), d20, (), cfg)
    sc, _ = distill(teacher, _student(0), train, pairs, cfg)
    assert accuracy(sc, test) >= accuracy(st, test)
