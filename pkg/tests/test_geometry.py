import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cod.cfe import CfeConfig, CfePair, build_cfe_dataset
from cod.data import few_shot_sample
from cod.errors import UndefinedDistanceError, ValidationError
from cod.geometry import (BoundarySet, Region, check_bound, compute_alpha, compute_epsilon, crossings_for_pairs,
                          directed_hausdorff, extract_boundary, grid_to_csv, hausdorff, probability_grid,
                          region_from_data)
from cod.nn import prob1

SQUARE = Region([-1.0, -1.0], [1.0, 1.0])


def test_linear_boundary(linear_teacher):
    b = extract_boundary(linear_teacher, SQUARE, 64, 1e-6)
    assert len(b) > 0
    assert np.max(np.abs(b.points[:, 0])) <= 1e-6
    assert np.all(np.abs(linear_teacher(b.points) - 0.5) <= 1e-6)


def test_constant_model_gives_empty_flagged_set():
    b = extract_boundary(lambda X: np.full(len(X), 0.9), SQUARE, 32)
    assert b.is_empty and b.meta["empty"]
    with pytest.raises(UndefinedDistanceError):
        hausdorff(b, b)


def test_boundary_count_grows_with_resolution(moons_teacher):
    data, teacher = moons_teacher
    region = region_from_data(data.features)
    counts = [len(extract_boundary(teacher, region, r)) for r in (32, 64, 128)]
    assert counts[1] >= 0.95 * counts[0] and counts[2] >= 0.95 * counts[1]


def test_probability_grid_rows(linear_teacher, tmp_path):
    g = probability_grid(linear_teacher, SQUARE, 17)
    assert g.shape == (17 * 17, 3)
    grid_to_csv(g, tmp_path / "g.csv")
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,p1" and len(lines) == 17 * 17 + 1


def test_region_validation():
    with pytest.raises(ValidationError):
        Region([0.0, 0.0], [0.0, 1.0])


def test_hausdorff_examples():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert hausdorff(a, a).h == 0.0
    r = hausdorff(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]]))
    assert r.h == 5.0 and r.directed_ts == 5.0 and r.directed_st == 5.0
    r = hausdorff(a, np.array([[0.0, 0.0]]))
    assert r.directed_ts == 1.0 and r.directed_st == 0.0 and r.h == 1.0


pts = st.integers(1, 60).flatmap(
    lambda n: st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), min_size=n, max_size=n))


@settings(max_examples=100, deadline=None)
@given(pts, pts)
def test_hausdorff_metric_properties(a, b):
    a, b = np.array(a), np.array(b)
    h = hausdorff(a, b)
    assert h.h >= 0
    assert h.h == hausdorff(b, a).h
    assert h.h == hausdorff(a, b, accelerate=False).h
    assert h.directed_ts == directed_hausdorff(a, b)[0]


@settings(max_examples=50, deadline=None)
@given(pts, pts, pts)
def test_hausdorff_triangle(a, b, c):
    a, b, c = map(np.array, (a, b, c))
    assert hausdorff(a, c).h <= hausdorff(a, b).h + hausdorff(b, c).h + 1e-12


def test_crossing_linear(linear_teacher):
    p = CfePair(np.array([-1.0, 0.0]), np.array([1.0, 0.0]), 0, 1, 2.0, 0.73)
    np.testing.assert_allclose(crossings_for_pairs(linear_teacher, [p])[0], [0.0, 0.0], atol=1e-9)


@pytest.fixture(scope="module")
def moons_pairs(moons_teacher):
    data, teacher = moons_teacher
    _, pairs = build_cfe_dataset(teacher, few_shot_sample(data, 20, 0))
    return pairs


def test_crossings_collinear_and_on_level_set(moons_teacher, moons_pairs):
    _, teacher = moons_teacher
    xs = crossings_for_pairs(teacher, moons_pairs, 1e-10)
    assert len(xs) == 20
    assert np.all(np.abs(prob1(teacher, xs) - 0.5) <= 1e-6)
    for p, c in zip(moons_pairs, xs):
        gap = np.linalg.norm(c - p.x) + np.linalg.norm(c - p.x_cf) - np.linalg.norm(p.x - p.x_cf)
        assert abs(gap) <= 1e-9


def test_alpha_examples():
    p = lambda n: CfePair(np.zeros(2), np.zeros(2), 0, 1, n, 0.5)
    assert compute_alpha([p(0.3)]) == 0.3
    assert compute_alpha([p(0.7)] * 4) == 0.7
    with pytest.raises(ValidationError):
        compute_alpha([])


def test_epsilon_examples():
    s = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert compute_epsilon(s, s, s) == 0.0
    assert compute_epsilon(np.zeros((1, 2)), np.array([[0.0, 2.0]]), np.zeros((1, 2))) >= 2.0


def test_epsilon_matches_double_loop(moons_teacher, moons_pairs):
    data, teacher = moons_teacher
    region = region_from_data(data.features)
    bt = extract_boundary(teacher, region, 48)
    bs = BoundarySet(bt.points[::3] + 0.01, "shifted", region, 48)
    xs = crossings_for_pairs(teacher, moons_pairs)

    def cover(bnd):
        worst = 0.0
        for q in bnd:
            best = min(float(np.sqrt(((q - c) ** 2).sum())) for c in xs)
            worst = max(worst, best)
        return worst

    assert compute_epsilon(xs, bt, bs) == max(cover(bt.points), cover(bs.points))


def test_bound_control_and_delta_shrink(moons_teacher):
    data, teacher = moons_teacher
    region = region_from_data(data.features)
    d10 = few_shot_sample(data, 10, 1)
    _, p1 = build_cfe_dataset(teacher, d10, CfeConfig(overshoot_delta=2e-3))
    _, p2 = build_cfe_dataset(teacher, d10, CfeConfig(overshoot_delta=1e-3))
    r1 = check_bound(teacher, teacher.copy(), p1, region, 64)
    r2 = check_bound(teacher, teacher.copy(), p2, region, 64)
    assert r1.h == 0.0 and r1.satisfied and r1.slack_used == 0.0
    assert r2.alpha <= r1.alpha and r2.bound <= r1.bound
    d = json.loads(json.dumps(r1.to_dict()))
    assert d["satisfied"] is True
