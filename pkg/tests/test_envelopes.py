import numpy as np
import pytest
from scipy import integrate

from src.envelopes import (EnvelopeLike, evaluate, make_envelope, make_sinn, make_square, make_walsh,
                           pulse_energy, sequency_walsh, walsh_signs)
from src.errors import InvalidParameterError

TAU = 2938e-6


def test_sin2_shape_values(omega):
    env = make_sinn(omega, 2, 1, TAU)
    assert env.shape(TAU/2) == pytest.approx(1.0, abs=1e-12)
    assert env.shape(0.0) == pytest.approx(0.0, abs=1e-12)
    assert env.shape(TAU) == pytest.approx(0.0, abs=1e-12)
    assert env.shape(TAU/4) == pytest.approx(0.5, abs=1e-12)


def test_square_shape_and_energy(omega):
    env = make_square(omega, 1122e-6)
    assert env.shape(1122e-6/2) == 1.0
    assert env.shape(-1122e-7) == 0.0
    assert pulse_energy(env) == pytest.approx(omega**2*1122e-6, rel=1e-14)


def test_walsh_seven_pattern(omega):
    env = make_walsh(omega, TAU, 7)
    assert env.segments == (1, -1, 1, -1, 1, -1, 1, -1)
    assert np.count_nonzero(np.diff(env.segments)) == 7
    mids = (np.arange(8) + 0.5)*TAU/8
    np.testing.assert_array_equal(np.sign(env.shape(mids)), env.segments)


def test_sequency_order_counts_sign_changes():
    w = sequency_walsh(16)
    changes = np.count_nonzero(np.diff(w, axis=1), axis=1)
    np.testing.assert_array_equal(changes, np.arange(16))
    assert walsh_signs(0) == (1,)
    assert len(walsh_signs(5)) == 8


def test_walsh_zero_identical_to_square(omega):
    t = np.linspace(-0.5*TAU, 1.5*TAU, 2001)
    np.testing.assert_array_equal(make_walsh(omega, TAU, 0).rabi(t), make_square(omega, TAU).rabi(t))


def test_evaluate_examples(omega):
    sq = make_square(omega, TAU)
    assert evaluate(sq, TAU/3) == pytest.approx(2*np.pi*1180.0)
    assert evaluate(make_sinn(omega, 2, 1, TAU), 0.0) == 0.0
    assert evaluate(make_walsh(omega, TAU, 7), 1.5*TAU/8) == pytest.approx(-omega)


@pytest.mark.parametrize("env_factory", [
    lambda w: make_square(w, TAU),
    lambda w: make_sinn(w, 2, 1, TAU),
    lambda w: make_sinn(w, 3, 2, TAU),
    lambda w: make_walsh(w, TAU, 7),
])
def test_zero_outside_support(omega, env_factory):
    env = env_factory(omega)
    t = np.linspace(-2*TAU, 3*TAU, 5001)
    outside = (t < 0) | (t > TAU)
    assert np.all(evaluate(env, t[outside]) == 0.0)


def test_sin2_energy_closed_form(omega):
    env = make_sinn(omega, 2, 1, TAU)
    assert pulse_energy(env) == pytest.approx(3.0/8.0*omega**2*TAU, rel=1e-14)


@pytest.mark.parametrize("env_factory", [
    lambda w: make_square(w, TAU),
    lambda w: make_sinn(w, 1, 1, TAU),
    lambda w: make_sinn(w, 2, 1, TAU),
    lambda w: make_sinn(w, 4, 3, TAU),
    lambda w: make_walsh(w, TAU, 7),
])
def test_energy_quadrature_matches_closed_form(omega, env_factory):
    env = env_factory(omega)
    assert pulse_energy(env, method="quad") == pytest.approx(pulse_energy(env), rel=1e-10)


def test_energy_ratio_sin2_vs_square(omega):
    ratio = pulse_energy(make_sinn(omega, 2, 1, 2938e-6))/pulse_energy(make_square(omega, 1122e-6))
    assert ratio == pytest.approx(0.982, abs=1e-3)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_sinn_symmetric(omega, n):
    env = make_sinn(omega, n, 1, TAU)
    t = np.linspace(0.0, TAU, 1001)
    np.testing.assert_allclose(env.shape(t), env.shape(TAU - t), atol=1e-12)


def test_sinn_peak_and_bounds(omega):
    env = make_sinn(omega, 3, 2, TAU)
    t = np.linspace(0.0, TAU, 4001)
    p = env.shape(t)
    assert np.all(np.abs(p) <= 1.0 + 1e-15)
    assert np.max(np.abs(p)) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("call", [
    lambda w: make_sinn(w, 2, 1, 0.0),
    lambda w: make_sinn(-w, 2, 1, TAU),
    lambda w: make_sinn(w, 0, 1, TAU),
    lambda w: make_square(w, -1.0),
    lambda w: make_walsh(w, TAU, -1),
    lambda w: make_envelope("gaussian", w, TAU),
])
def test_invalid_parameters(omega, call):
    with pytest.raises(InvalidParameterError):
        call(omega)


def test_custom_envelope_energy(blackman):
    assert isinstance(blackman, EnvelopeLike)
    ref, _ = integrate.quad(lambda t: blackman.rabi(t)**2, 0.0, blackman.duration, epsrel=1e-13)
    assert pulse_energy(blackman) == pytest.approx(ref, rel=1e-10)


def test_make_envelope_dispatch(omega):
    assert make_envelope("sin2", omega, TAU) == make_sinn(omega, 2, 1, TAU)
    assert make_envelope("walsh", omega, TAU, walsh_index=3).segments == walsh_signs(3)
