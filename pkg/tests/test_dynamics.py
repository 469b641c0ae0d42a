import numpy as np
import pytest
import qutip
from scipy.integrate import quad

from src.dynamics import (ErrorModel, PopulationRecord, ThermalSpec, analytic_final_state, analytic_populations,
                          bell_fidelity, bell_target, compensation_frequencies, fock_propagate, parity_curve,
                          populations_from_rho, spin_density_from_fga, static_detuning_fidelity)
from src.errors import InvalidParameterError, NumericFailureError
from src.gateConst import ModuleConst, hz2rad

DOWN_DOWN = qutip.tensor(qutip.basis(2, 1), qutip.basis(2, 1))


@pytest.mark.parametrize("nbar", [0.0, 0.4, 2.0])
def test_ideal_gate_reaches_bell_state(sin2_k17, nbar):
    rho = analytic_final_state(sin2_k17, ThermalSpec(nbar))
    assert bell_fidelity(rho, sin2_k17.phase_sign) == pytest.approx(1.0, abs=1e-8)
    assert populations_from_rho(rho) == pytest.approx((0.5, 0.0, 0.5), abs=1e-8)


def test_initial_populations(sin2_k17):
    rec = analytic_populations(sin2_k17, ThermalSpec(0.4), [0.0])
    assert rec.at(0) == pytest.approx((1.0, 0.0, 0.0), abs=1e-12)


def test_populations_freeze_after_gate(sin2_k17):
    tau = sin2_k17.tau
    rec = analytic_populations(sin2_k17, ThermalSpec(0.4), [tau, 1.25*tau, 2.0*tau])
    assert rec.at(1) == pytest.approx(rec.at(0), abs=1e-12)
    assert rec.at(2) == pytest.approx(rec.at(0), abs=1e-12)


def test_populations_are_normalized(square7):
    times = np.linspace(0.0, square7.tau, 301)
    rec = analytic_populations(square7, ThermalSpec(0.4), times)
    np.testing.assert_allclose(rec.p0 + rec.p1 + rec.p2, 1.0, atol=1e-9)
    assert rec.rows().shape == (301, 4)


def test_population_record_rejects_unnormalized():
    with pytest.raises(NumericFailureError):
        PopulationRecord([0.0], [0.5], [0.2], [0.1])


def test_flat_populations_at_gate_end(sin2_k17):
    tau = sin2_k17.tau
    thermal = ThermalSpec(0.4)
    grid = np.linspace(0.0, tau, 2001)
    rec = analytic_populations(sin2_k17, thermal, grid)
    h = tau/1000.0
    edge = analytic_populations(sin2_k17, thermal, [tau - h, tau + h])
    for name in ("p0", "p1", "p2"):
        scale = np.max(np.abs(np.gradient(getattr(rec, name), grid)))
        end_slope = (getattr(edge, name)[1] - getattr(edge, name)[0])/(2*h)
        assert abs(end_slope) < 1e-3*scale


def test_bell_fidelity_of_unevolved_state():
    assert bell_fidelity(DOWN_DOWN) == pytest.approx(0.5, abs=1e-14)
    assert bell_fidelity(DOWN_DOWN, phase_sign=1) == pytest.approx(0.5, abs=1e-14)
    assert bell_fidelity(bell_target(-1), -1) == pytest.approx(1.0, abs=1e-14)
    assert bell_fidelity(bell_target(-1), 1) == pytest.approx(0.0, abs=1e-14)


def test_parity_curve_of_bell_and_product_states():
    phases = np.linspace(0.0, 2*np.pi, 16, endpoint=False)
    bell = parity_curve(bell_target(-1), phases)
    assert np.max(np.abs(bell)) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(bell[:8], bell[8:], atol=1e-12)
    np.testing.assert_allclose(parity_curve(DOWN_DOWN, phases), 0.0, atol=1e-12)


def test_static_detuning_zero_is_ideal(sin2_k17, square7):
    for sol in (sin2_k17, square7):
        assert static_detuning_fidelity(sol, 0.0, ThermalSpec(0.4)) == pytest.approx(1.0, abs=1e-9)


def test_analytic_detuning_paths_agree(square7):
    eps = hz2rad(150.0)
    thermal = ThermalSpec(0.4)
    rho = analytic_final_state(square7, thermal, ErrorModel(static_detuning=eps))
    assert bell_fidelity(rho, square7.phase_sign) == pytest.approx(
        static_detuning_fidelity(square7, eps, thermal), abs=1e-8)


def test_shaped_gate_beats_square_under_detuning(sin2_k17, square7):
    eps = hz2rad(200.0)
    thermal = ThermalSpec(0.4)
    assert static_detuning_fidelity(sin2_k17, eps, thermal) > static_detuning_fidelity(square7, eps, thermal)


def test_thermal_occupation_hurts_open_loops(square7):
    eps = hz2rad(200.0)
    cold = static_detuning_fidelity(square7, eps, ThermalSpec(0.0))
    warm = static_detuning_fidelity(square7, eps, ThermalSpec(2.0))
    assert warm < cold < 1.0


def test_density_from_fga_broadcasts():
    f = np.array([0.0, 0.1, 0.2])
    rho = spin_density_from_fga(f, -f, np.zeros(3), 0.4)
    assert rho.shape == (3, 4, 4)
    np.testing.assert_allclose(np.trace(rho, axis1=1, axis2=2).real, 1.0, atol=1e-12)
    np.testing.assert_allclose(rho[0], DOWN_DOWN.proj().full(), atol=1e-12)


def test_analytic_model_rejects_zeeman_and_heating(sin2_k17):
    with pytest.raises(InvalidParameterError):
        analytic_populations(sin2_k17, ThermalSpec(), [0.0], ErrorModel(zeeman_peak=(20.0, 0.0)))
    with pytest.raises(InvalidParameterError):
        analytic_final_state(sin2_k17, ThermalSpec(), ErrorModel(heating_rate=8.4))
    # compensated common shift leaves the model exact
    analytic_final_state(sin2_k17, ThermalSpec(), ErrorModel(zeeman_peak=(20.0, 20.0), compensation=True))


def test_error_model_validation():
    with pytest.raises(InvalidParameterError):
        ErrorModel(heating_rate=-1.0)
    with pytest.raises(InvalidParameterError):
        ErrorModel(zeeman_peak=(1.0,))
    with pytest.raises(InvalidParameterError):
        ThermalSpec(nbar=-0.1)


def test_thermal_mixture_weights():
    n, w = ThermalSpec(0.4, 40).mixture()
    assert n[0] == 0 and w.sum() == pytest.approx(1.0, abs=1e-15)
    assert w[0] == pytest.approx(1.0/1.4, rel=1e-7)
    assert ThermalSpec(0.0).tail_weight() == 0.0
    assert ThermalSpec(0.4, 40).tail_weight() < 1e-8


def test_fock_cutoff_too_small(sin2_k17):
    with pytest.raises(InvalidParameterError):
        fock_propagate(sin2_k17, thermal=ThermalSpec(0.4, 8))


def test_compensation_frequencies(sin2_k17):
    errors = ErrorModel(zeeman_peak=(20.0, 20.0), compensation=True)
    blue, red = compensation_frequencies(sin2_k17, errors, sin2_k17.tau/2)
    offset = ModuleConst.mode_freq_hz + sin2_k17.delta/(2*np.pi)
    assert blue == pytest.approx(ModuleConst.qubit_freq_hz + 20.0 + offset, rel=1e-15)
    assert red == pytest.approx(ModuleConst.qubit_freq_hz + 20.0 - offset, rel=1e-15)
    blue0, _ = compensation_frequencies(sin2_k17, ErrorModel(zeeman_peak=(20.0, 20.0)), sin2_k17.tau/2)
    assert blue0 == pytest.approx(ModuleConst.qubit_freq_hz + offset, rel=1e-15)


def test_error_model_echo():
    record = ErrorModel(static_detuning=hz2rad(100.0), zeeman_peak=(20.0, 0.0)).as_dict()
    assert record["static_detuning_hz"] == pytest.approx(100.0)
    assert record["zeeman_peak_hz"] == [20.0, 0.0]


#######################################################################################
# Fock-space propagation

@pytest.mark.slow
def test_fock_matches_analytic_ground_state(sin2_k17):
    times = np.linspace(0.0, sin2_k17.tau, 50)
    thermal = ThermalSpec(0.0, 40)
    result = fock_propagate(sin2_k17, thermal=thermal, times=times)
    ref = analytic_populations(sin2_k17, thermal, times)
    for name in ("p0", "p1", "p2"):
        np.testing.assert_allclose(getattr(result.record, name), getattr(ref, name), atol=1e-6)
    assert result.fidelity == pytest.approx(1.0, abs=1e-8)
    assert result.report["norm"] == pytest.approx(1.0, abs=1e-9)
    assert result.state.dims == [[2, 2, 40], [2, 2, 40]]


@pytest.mark.slow
def test_fock_matches_analytic_thermal(sin2_k17):
    times = np.linspace(0.0, sin2_k17.tau, 50)
    thermal = ThermalSpec(0.4, 40)
    result = fock_propagate(sin2_k17, thermal=thermal, times=times, check_convergence=True)
    assert result.report["cutoff_change"] < 1e-6
    ref = analytic_populations(sin2_k17, thermal, times)
    for name in ("p0", "p1", "p2"):
        np.testing.assert_allclose(getattr(result.record, name), getattr(ref, name), atol=1e-4)


@pytest.mark.slow
def test_fock_static_detuning_matches_analytic(square7):
    eps = hz2rad(100.0)
    thermal = ThermalSpec(0.4, 40)
    result = fock_propagate(square7, ErrorModel(static_detuning=eps), thermal)
    expected = static_detuning_fidelity(square7, eps, thermal)
    assert result.fidelity == pytest.approx(expected, abs=1e-4)
    assert result.fidelity < 1.0 - 1e-6


def _commuting_zeeman_infidelity(sol, shift_hz):
    """
    Bell infidelity of exp(-i pi/2 (S_y^2 + eta sz1)) against exp(-i pi/2 S_y^2).

    Both the Ising phase rate and H_Z follow P^2(t), so on a closed gate they
    commute and eta = Delta * int P^2 dt / pi.
    """
    weight, _ = quad(lambda t: float(sol.envelope.shape(t))**2, 0.0, sol.tau, limit=200)
    eta = hz2rad(shift_hz)*weight/np.pi
    sy = 0.5*(qutip.tensor(qutip.sigmay(), qutip.qeye(2)) + qutip.tensor(qutip.qeye(2), qutip.sigmay()))
    sz1 = qutip.tensor(qutip.sigmaz(), qutip.qeye(2))
    ideal = (-0.5j*np.pi*sy*sy).expm()
    shifted = (-0.5j*np.pi*(sy*sy + eta*sz1)).expm()
    overlap = (ideal*DOWN_DOWN).overlap(shifted*DOWN_DOWN)
    return 1.0 - abs(overlap)**2


@pytest.mark.slow
@pytest.mark.parametrize("nbar", [0.0, 0.4])
def test_zeeman_shift_infidelity(sin2_k17, nbar):
    thermal = ThermalSpec(nbar, 30)
    bare = fock_propagate(sin2_k17, ErrorModel(zeeman_peak=(20.0, 0.0)), thermal)
    assert bare.report["full_space"]
    expected = _commuting_zeeman_infidelity(sin2_k17, 20.0)
    assert expected == pytest.approx(1.94e-3, rel=0.02)
    assert 1.0 - bare.fidelity == pytest.approx(expected, rel=0.08)
    compensated = fock_propagate(sin2_k17, ErrorModel(zeeman_peak=(20.0, 0.0), compensation=True), thermal)
    assert 1.0 - compensated.fidelity < 1e-6


@pytest.mark.slow
def test_compensation_removes_common_shift(sin2_k17):
    thermal = ThermalSpec(0.4, 30)
    result = fock_propagate(sin2_k17, ErrorModel(zeeman_peak=(20.0, 20.0), compensation=True), thermal)
    assert 1.0 - result.fidelity < 1e-6


@pytest.mark.slow
def test_heating_infidelity(sin2_k17):
    thermal = ThermalSpec(0.4, 25)
    result = fock_propagate(sin2_k17, ErrorModel(heating_rate=ModuleConst.heating_rate), thermal)
    assert result.report["open_system"]
    assert abs(result.report["norm"] - 1.0) < 1e-7
    assert 1e-4 <= 1.0 - result.fidelity <= 4e-4
