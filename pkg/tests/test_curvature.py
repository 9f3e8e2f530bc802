import itertools
import math

import numpy as np
import pytest

from rectify import (
    Ball,
    PointMeasure,
    ResourceError,
    ScaleGrid,
    ValidationError,
    comparability_report,
    curvature_exact,
    curvature_sampled,
    gen_cantor4,
    gen_circle,
    gen_segment,
    inv_circumradius_sq,
)

RIGHT_TRIANGLE = PointMeasure(
    np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]]), np.ones(3), 1
)


def test_right_triangle_exact():
    result = curvature_exact(RIGHT_TRIANGLE)
    assert result.value == pytest.approx(0.96, abs=1e-12)
    assert result.mode == "exact"
    assert result.stderr == 0.0
    assert result.triples_evaluated == 1


def test_circle_closed_form():
    m = gen_circle(64, 1.0, 1.0)
    expect = 6.0 * math.comb(64, 3) / 64**3
    assert curvature_exact(m).value == pytest.approx(expect, abs=1e-12)


def test_circle_radius_scaling():
    # all circumradii equal the circle radius, so c2 scales with rho^-2
    m1 = gen_circle(32, 1.0, 1.0)
    m2 = gen_circle(32, 2.0, 1.0)
    assert curvature_exact(m2).value == pytest.approx(curvature_exact(m1).value / 4.0, rel=1e-12)


def test_collinear_exact_zero():
    m = gen_segment(300, 1.0, 1.0)
    assert curvature_exact(m).value == 0.0


def test_exact_cap_resource_error():
    m = gen_segment(2100, 1.0, 1.0)
    with pytest.raises(ResourceError, match="sampled"):
        curvature_exact(m)


def test_exact_small_counts():
    m = gen_segment(2, 1.0, 1.0)
    assert curvature_exact(m).value == 0.0


def test_exact_brute_force_oracle():
    # straight re-enumeration of ordered triples
    rng = np.random.default_rng(31)
    pts = rng.normal(size=(12, 2))
    w = rng.uniform(0.2, 1.3, size=12)
    m = PointMeasure(pts, w, 1)
    total = 0.0
    for i, j, k in itertools.permutations(range(12), 3):
        total += w[i] * w[j] * w[k] * inv_circumradius_sq(pts[i], pts[j], pts[k])
    assert curvature_exact(m).value == pytest.approx(total, rel=1e-11)


def test_exact_deterministic_and_permutation_stable():
    rng = np.random.default_rng(37)
    pts = rng.normal(size=(40, 2))
    w = rng.uniform(0.5, 1.5, size=40)
    m = PointMeasure(pts, w, 1)
    v1 = curvature_exact(m).value
    v2 = curvature_exact(m).value
    assert v1 == v2  # same ordering: bit-stable
    perm = rng.permutation(40)
    shuffled = PointMeasure(pts[perm], w[perm], 1)
    assert curvature_exact(shuffled).value == pytest.approx(v1, rel=1e-12)


def test_mass_homogeneity_exact_bits():
    m = gen_cantor4(3)
    v = curvature_exact(m).value
    assert curvature_exact(m.scaled(2.0)).value == 8.0 * v


def test_rigid_motion_invariance():
    rng = np.random.default_rng(41)
    pts = rng.normal(size=(30, 2))
    w = rng.uniform(0.5, 1.5, size=30)
    v = curvature_exact(PointMeasure(pts, w, 1)).value
    theta = 1.234
    rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    moved = PointMeasure(pts @ rot.T + np.array([3.0, -1.0]), w, 1)
    assert curvature_exact(moved).value == pytest.approx(v, rel=1e-9)


def test_subadditivity_under_restriction():
    m = gen_cantor4(3)
    sub = m.restricted(np.arange(0, m.count, 2))
    assert curvature_exact(sub).value <= curvature_exact(m).value


def test_sampled_collinear():
    m = gen_segment(500, 1.0, 1.0)
    result = curvature_sampled(m, 1000, seed=9)
    assert result.value == 0.0
    assert result.stderr == 0.0


def test_sampled_seed_determinism():
    m = gen_cantor4(4)
    a = curvature_sampled(m, 5000, seed=123)
    b = curvature_sampled(m, 5000, seed=123)
    assert a.value == b.value and a.stderr == b.stderr


def test_sampled_minimum_samples():
    with pytest.raises(ValidationError):
        curvature_sampled(RIGHT_TRIANGLE, 50, seed=0)


def test_sampled_three_atom_expectation():
    # oracle: enumerate all 27 index triples with probability weights; repeats
    # contribute zero by the degeneracy convention
    w = np.ones(3)
    p = w / 3.0
    mass_cubed = 3.0**3
    pts = RIGHT_TRIANGLE.positions
    expect = 0.0
    for i in range(3):
        for j in range(3):
            for k in range(3):
                expect += p[i] * p[j] * p[k] * mass_cubed * inv_circumradius_sq(
                    pts[i], pts[j], pts[k]
                )
    assert expect == pytest.approx(0.96, abs=1e-12)
    result = curvature_sampled(RIGHT_TRIANGLE, 100_000, seed=5)
    assert abs(result.value - expect) <= 3.0 * result.stderr


def test_sampled_matches_exact_within_stderr():
    rng = np.random.default_rng(43)
    pts = rng.normal(size=(300, 2))
    w = rng.uniform(0.5, 1.5, size=300)
    m = PointMeasure(pts, w, 1)
    exact = curvature_exact(m).value
    hits = 0
    for seed in range(20):
        est = curvature_sampled(m, 20_000, seed=seed)
        if abs(est.value - exact) <= 3.0 * est.stderr:
            hits += 1
    assert hits >= 18


def test_comparability_requires_planar_curve_setting():
    m = gen_segment(50, 1.0, 1.0, ambient_dim=3)
    with pytest.raises(ValidationError):
        comparability_report(m, ScaleGrid(1.0, 5, 0.5))


def test_comparability_collinear_ratio_one():
    m = gen_segment(200, 1.0, 1.0)
    rep = comparability_report(m, ScaleGrid(1.0, 8, 0.5))
    assert rep.c2 == 0.0
    assert rep.energy_p1 == 0.0
    assert rep.ratio == 1.0
    assert rep.growth_max > 0


def test_comparability_growth_normalization():
    m = gen_circle(128, 1.0, 1.0)
    rep = comparability_report(m, ScaleGrid(2.0, 8, 0.5))
    # after normalization the largest observed mu(B)/r over the grid is 1
    from rectify.multiscale import profile_matrix

    normalized = m.scaled(1.0 / rep.growth_max)
    _, theta = profile_matrix(normalized, ScaleGrid(2.0, 8, 0.5))
    assert np.max(theta) == pytest.approx(1.0, rel=1e-12)
    assert rep.ratio > 0
