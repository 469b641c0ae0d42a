import numpy as np
import pytest

from src.envelopes import make_sinn, make_square, make_walsh
from src.errors import InvalidParameterError, NumericFailureError, UnsupportedShapeError
from src.solver import sin2_phase_coefficient, solve_sin2, solve_square
from src.trajectory import (Trajectory, fga_closed_form, fga_from_phase, fga_on_grid, fga_quadrature,
                            sample_trajectory, segment_grid)

SQRT2 = np.sqrt(2.0)


def test_origin_at_time_zero(omega):
    env = make_sinn(omega, 2, 1, 3e-3)
    assert fga_quadrature(env, 2*np.pi*6e3, 0.0) == (0.0, 0.0, 0.0)
    assert fga_closed_form(env, 2*np.pi*6e3, 0.0) == pytest.approx((0.0, 0.0, 0.0), abs=1e-15)


def test_square_quadrature_matches_antiderivative(omega, rng):
    tau = 1e-3
    env = make_square(omega, tau)
    for _ in range(20):
        delta = 2*np.pi*rng.uniform(2e3, 20e3)
        t = rng.uniform(0.0, tau)
        f, g, _ = fga_quadrature(env, delta, t)
        assert f == pytest.approx(-SQRT2*omega*np.sin(delta*t)/delta, abs=1e-9)
        assert g == pytest.approx(SQRT2*omega*(np.cos(delta*t) - 1.0)/delta, abs=1e-9)


def test_square_loops_close_with_known_area(omega):
    loops = 3
    delta = 2*omega*np.sqrt(loops)
    tau = 2*np.pi*loops/delta
    env = make_square(omega, tau)
    f, g, a = fga_closed_form(env, delta, tau)
    assert f == pytest.approx(0.0, abs=1e-12)
    assert g == pytest.approx(0.0, abs=1e-12)
    assert a == pytest.approx(-2*np.pi*loops*omega**2/delta**2, rel=1e-12)
    assert fga_quadrature(env, delta, tau)[2] == pytest.approx(a, abs=1e-9)


def test_sin2_k17_reaches_gate_point(sin2_k17):
    f, g, a = fga_quadrature(sin2_k17.envelope, sin2_k17.delta, sin2_k17.tau)
    assert abs(f) < 1e-6 and abs(g) < 1e-6
    assert a == pytest.approx(-np.pi/2, abs=1e-6)
    assert sin2_k17.delta*sin2_k17.tau == pytest.approx(2*np.pi*18, rel=1e-12)


@pytest.mark.parametrize("k", [1, 2, 17, 20])
def test_sin2_closed_phase_formula(omega, k):
    sol = solve_sin2(omega, k)
    expected = -(omega**2*sol.tau**2/np.pi)*sin2_phase_coefficient(k)
    assert fga_closed_form(sol.envelope, sol.delta, sol.tau)[2] == pytest.approx(expected, abs=1e-9)
    assert fga_quadrature(sol.envelope, sol.delta, sol.tau)[2] == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("factory", [
    lambda w, tau: make_square(w, tau),
    lambda w, tau: make_sinn(w, 2, 1, tau),
    lambda w, tau: make_walsh(w, tau, 7),
    lambda w, tau: make_sinn(w, 3, 2, tau),
])
def test_closed_form_matches_quadrature(omega, rng, factory):
    for _ in range(15):
        tau = rng.uniform(0.5e-3, 3e-3)
        env = factory(omega, tau)
        delta = 2*np.pi*rng.uniform(2e3, 10e3)*rng.choice([-1.0, 1.0])
        t = rng.uniform(0.0, tau)
        closed = fga_closed_form(env, delta, t)
        quad = fga_quadrature(env, delta, t)
        np.testing.assert_allclose(closed, quad, atol=1e-9, rtol=0)


def test_closed_form_rejects_custom_envelope(blackman):
    with pytest.raises(UnsupportedShapeError):
        fga_closed_form(blackman, 2*np.pi*5e3, 1e-3)


def test_quadrature_accepts_custom_envelope(blackman):
    f, g, a = fga_quadrature(blackman, 2*np.pi*5e3, blackman.duration)
    assert np.all(np.isfinite([f, g, a]))
    traj = sample_trajectory(blackman, 2*np.pi*5e3, 11)
    assert traj.f[-1] == pytest.approx(f, abs=1e-9)


def test_quadrature_failure_carries_estimate(sin2_k17):
    with pytest.raises(NumericFailureError) as info:
        fga_quadrature(sin2_k17.envelope, sin2_k17.delta, 0.7*sin2_k17.tau, tol=1e-22)
    assert info.value.error_estimate > 1e-22


def test_square_single_loop_is_circle(omega):
    sol = solve_square(omega, 1)
    traj = sample_trajectory(sol.envelope, sol.delta, 501)
    r = SQRT2*omega/sol.delta
    np.testing.assert_allclose(np.hypot(traj.f, traj.g + r), r, atol=1e-9)


def test_sin2_winds_tighter_than_square(omega):
    sq = solve_square(omega, 1)
    s2 = solve_sin2(omega, 1)
    r_sq = sample_trajectory(sq.envelope, sq.delta, 2001).radius().max()
    r_s2 = sample_trajectory(s2.envelope, s2.delta, 2001).radius().max()
    assert r_s2 < r_sq


def test_two_point_trajectory_ends_at_origin(sin2_k17):
    traj = sample_trajectory(sin2_k17.envelope, sin2_k17.delta, 2)
    assert len(traj) == 2
    assert traj.times[0] == 0.0 and traj.times[-1] == sin2_k17.tau
    assert abs(traj.f[-1]) < 1e-9 and abs(traj.g[-1]) < 1e-9


def test_num_points_validated(sin2_k17):
    with pytest.raises(InvalidParameterError):
        sample_trajectory(sin2_k17.envelope, sin2_k17.delta, 1)


def test_endpoint_stationary_for_sin2(sin2_k17):
    traj = sample_trajectory(sin2_k17.envelope, sin2_k17.delta, 10001)
    for y in (traj.f, traj.g, traj.a):
        slope = np.gradient(y, traj.times)
        assert abs(slope[-1]) < 1e-6*np.max(np.abs(slope))


def test_scaling_with_rabi_frequency(sin2_k17):
    env, delta, t = sin2_k17.envelope, sin2_k17.delta, 0.37*sin2_k17.tau
    f1, g1, a1 = fga_closed_form(env, delta, t)
    f2, g2, a2 = fga_closed_form(env.with_omega(2*env.omega_ms), delta, t)
    assert f2 == pytest.approx(2*f1, rel=1e-12)
    assert g2 == pytest.approx(2*g1, rel=1e-12)
    assert a2 == pytest.approx(4*a1, rel=1e-12)


def test_values_freeze_after_pulse(sin2_k17):
    tau = sin2_k17.tau
    f, g, a = fga_on_grid(sin2_k17.envelope, sin2_k17.delta, np.array([0.5*tau, tau, 1.3*tau]))
    assert (f[1], g[1], a[1]) == (f[2], g[2], a[2])


def test_phase_path_matches_closed_form(sin2_k17):
    env = sin2_k17.envelope
    grid, slices = segment_grid(env, 256*18 + 1)
    f, g, a = fga_from_phase(env, grid, sin2_k17.delta*grid, slices)
    fc, gc, ac = fga_closed_form(env, sin2_k17.delta, grid)
    np.testing.assert_allclose(f, fc, atol=1e-6)
    np.testing.assert_allclose(g, gc, atol=1e-6)
    np.testing.assert_allclose(a, ac, atol=1e-6)


def test_phase_path_on_walsh_segments(walsh8):
    env = walsh8.envelope
    grid, slices = segment_grid(env, 257)
    f, g, a = fga_from_phase(env, grid, walsh8.delta*grid, slices)
    assert a[-1] == pytest.approx(fga_closed_form(env, walsh8.delta, env.duration)[2], abs=1e-6)


def test_trajectory_validation():
    with pytest.raises(InvalidParameterError):
        Trajectory([0.0, 1.0, 1.0], [0, 0, 0], [0, 0, 0], [0, 0, 0])
    with pytest.raises(InvalidParameterError):
        Trajectory([0.0, 1.0], [0, 0, 0], [0, 0], [0, 0])
