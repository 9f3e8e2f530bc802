import math

import numpy as np
import pytest

from rectify import (
    Ball,
    PointMeasure,
    ScaleGrid,
    ValidationError,
    ball_mass,
    beta_p,
    gen_cantor4,
    gen_circle,
    gen_segment,
    profile_matrix,
    scale_profile,
    total_energy,
)
from rectify.multiscale import jones_function, point_profile


def rotation(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def test_grid_validation_and_scales():
    grid = ScaleGrid(1.0, 4, 0.5)
    assert np.allclose(grid.scales, [1.0, 0.5, 0.25, 0.125])
    assert grid.log_weight == pytest.approx(math.log(2))
    with pytest.raises(ValidationError):
        ScaleGrid(1.0, 0, 0.5)
    with pytest.raises(ValidationError):
        ScaleGrid(1.0, 3, 1.5)


def test_grid_spanning():
    grid = ScaleGrid.spanning(1.0, 0.01, 0.5)
    assert grid.scales[-1] <= 0.01 < grid.scales[-2]


def test_beta_collinear_zero():
    m = gen_segment(64, 1.0, 1.0)
    est = beta_p(m, Ball([0.5, 0.0], 0.3))
    assert est.beta == 0.0


def test_beta_four_atom_fixture():
    # hand evaluation: mse = 4 h^2 against the x-axis, r = 2, n = 1,
    # so beta^2 = 4 h^2 / r^3 = h^2 / 2
    h = 0.05
    pts = np.array([[1, h], [1, -h], [-1, h], [-1, -h]], dtype=float)
    m = PointMeasure(pts, np.ones(4), 1)
    est = beta_p(m, Ball([0.0, 0.0], 2.0))
    assert est.beta**2 == pytest.approx(h**2 / 2.0, rel=1e-12)


def test_beta_empty_ball():
    m = gen_segment(16, 1.0, 1.0)
    est = beta_p(m, Ball([40.0, 0.0], 1.0))
    assert est.beta == 0.0
    assert est.mass_in_ball == 0.0


def test_beta_estimate_normalization_invariant():
    # beta^2 r^(n+2) recovers the fitted weighted mse
    from rectify import fit_plane_weighted
    from rectify.measures import ball_mask

    m = gen_circle(128, 1.0, 1.0)
    ball = Ball(m.positions[0], 0.7)
    est = beta_p(m, ball)
    mask = ball_mask(m.positions, ball.center, ball.radius)
    _, mse = fit_plane_weighted(m.positions[mask], m.weights[mask], 1)
    assert est.beta**2 * ball.radius**3 == pytest.approx(mse, rel=1e-10)


def test_beta_rigid_motion_invariance():
    rng = np.random.default_rng(23)
    pts = rng.normal(size=(50, 2))
    w = rng.uniform(0.5, 2.0, size=50)
    m = PointMeasure(pts, w, 1)
    ball = Ball(pts[0], 1.5)
    b0 = beta_p(m, ball).beta
    assert b0 > 0.01
    for _ in range(10):
        rot = rotation(rng.uniform(0, 2 * math.pi))
        shift = rng.normal(size=2)
        moved = PointMeasure(pts @ rot.T + shift, w, 1)
        b1 = beta_p(moved, Ball(rot @ pts[0] + shift, 1.5)).beta
        assert b1 == pytest.approx(b0, rel=1e-9)


def test_beta_trivial_density_bound():
    # beta^2 <= 4 theta: distances inside the ball to a plane through the
    # weighted centroid never exceed 2r
    rng = np.random.default_rng(29)
    m = PointMeasure(rng.normal(size=(200, 2)), rng.uniform(0.1, 1.0, 200), 1)
    for _ in range(50):
        ball = Ball(rng.normal(size=2), rng.uniform(0.2, 3.0))
        est = beta_p(m, ball)
        theta = ball_mass(m, ball) / ball.radius
        assert est.beta**2 <= 4.0 * theta + 1e-15


def test_beta_irls_mode_flagged():
    m = gen_circle(64, 1.0, 1.0)
    est = beta_p(m, Ball(m.positions[0], 0.8), p=1.0)
    assert est.mode == "irls"
    assert est.beta > 0


def test_beta_weight_homogeneity():
    m = gen_circle(100, 1.0, 1.0)
    ball = Ball(m.positions[3], 0.9)
    base = beta_p(m, ball)
    doubled = beta_p(m.scaled(2.0), ball)
    assert doubled.beta**2 == pytest.approx(2.0 * base.beta**2, rel=1e-12)


def test_profile_segment_all_zero():
    m = gen_segment(256, 1.0, 1.0)
    grid = ScaleGrid(1.0, 10, 0.5)
    prof = scale_profile(m, 128, grid)
    assert prof.jones == 0.0
    assert np.all(prof.beta_sq == 0.0)


def test_profile_single_atom_measure():
    m = PointMeasure(np.array([[0.25, 0.5], [90.0, 90.0]]), np.array([2.0, 1.0]), 1)
    grid = ScaleGrid(1.0, 5, 0.5)
    prof = scale_profile(m, 0, grid)
    assert prof.jones == 0.0
    assert np.allclose(prof.theta, 2.0 / grid.scales)


def test_profile_monotone_in_scale_count():
    m = gen_cantor4(4)
    base = ScaleGrid(1.5, 6, 0.5)
    longer = ScaleGrid(1.5, 9, 0.5)
    j_base = scale_profile(m, 10, base).jones
    j_longer = scale_profile(m, 10, longer).jones
    assert j_longer >= j_base


def test_profile_matches_direct_beta():
    # per-scale entries agree with the standalone ball fit
    m = gen_cantor4(3)
    grid = ScaleGrid(1.0, 6, 0.5)
    prof = scale_profile(m, 7, grid)
    for j, r in enumerate(grid.scales):
        est = beta_p(m, Ball(m.positions[7], float(r)))
        assert prof.beta_sq[j] == pytest.approx(est.beta**2, rel=1e-9, abs=1e-15)
        assert prof.theta[j] == pytest.approx(est.mass_in_ball / r, rel=1e-12)


def test_profile_matrix_matches_single_rows():
    m = gen_circle(60, 1.0, 1.0)
    grid = ScaleGrid(0.8, 7, 0.5)
    beta_sq, theta = profile_matrix(m, grid)
    for atom in (0, 17, 59):
        prof = scale_profile(m, atom, grid)
        assert np.array_equal(prof.beta_sq, beta_sq[atom])
        assert np.array_equal(prof.theta, theta[atom])


def test_cantor_jones_equal_increments():
    # self-similarity gives one quarter-scale block per generation; the
    # brute-force oracle below recomputes each block by a direct ball fit
    m = gen_cantor4(6)
    center_atom = int(np.argmin(np.sum((m.positions - 0.5) ** 2, axis=1)))
    grid = ScaleGrid(1.0, 6, 0.25)
    prof = scale_profile(m, center_atom, grid)
    incs = prof.beta_sq * grid.log_weight
    mid = incs[1:5]
    assert np.all(mid > 0)
    assert np.max(mid) / np.min(mid) < 1.35
    for j in (1, 2, 3):
        direct = beta_p(m, Ball(m.positions[center_atom], float(grid.scales[j])))
        assert prof.beta_sq[j] == pytest.approx(direct.beta**2, rel=1e-9)


def test_point_profile_off_support_warns():
    m = gen_segment(32, 1.0, 1.0)
    grid = ScaleGrid(0.5, 4, 0.5)
    with pytest.warns(RuntimeWarning):
        prof = point_profile(m, np.array([0.5, 0.3]), grid)
    assert prof.jones >= 0.0


def test_total_energy_collinear_zero():
    m = gen_segment(512, 1.0, 1.0)
    grid = ScaleGrid(1.0, 8, 0.5)
    assert total_energy(m, grid, p=1.0) == 0.0


def test_total_energy_weight_homogeneity_cubed():
    m = gen_cantor4(4)
    grid = ScaleGrid(1.2, 8, 0.5)
    base = total_energy(m, grid, p=1.0)
    scaled = total_energy(m.scaled(2.0), grid, p=1.0)
    assert base > 0
    assert scaled == pytest.approx(8.0 * base, rel=1e-9)


def test_total_energy_joint_rescale_scaling_law():
    # scaling positions and the grid together: beta^2 and theta both carry a
    # 1/r^n factor, so with fixed weights the p=0 energy scales by lambda^-n
    lam = 3.0
    m = gen_cantor4(4)
    grid = ScaleGrid(1.2, 8, 0.5)
    scaled = PointMeasure(m.positions * lam, m.weights, 1)
    grid_scaled = ScaleGrid(1.2 * lam, 8, 0.5)
    e0 = total_energy(m, grid, p=0.0)
    e1 = total_energy(scaled, grid_scaled, p=0.0)
    assert e0 > 0
    assert e1 == pytest.approx(e0 / lam, rel=1e-9)
    # and theta itself scales by 1/lambda per scale
    _, theta0 = profile_matrix(m, grid)
    _, theta1 = profile_matrix(scaled, grid_scaled)
    assert np.allclose(theta1, theta0 / lam, rtol=1e-9)


def test_jones_function_truncation():
    m = gen_cantor4(4)
    grid = ScaleGrid(1.2, 8, 0.5)
    beta_sq, _ = profile_matrix(m, grid)
    full = jones_function(beta_sq[0], grid)
    half = jones_function(beta_sq[0], grid, upto=4)
    assert 0 <= half <= full
    assert full == pytest.approx(float(np.sum(beta_sq[0])) * grid.log_weight)
