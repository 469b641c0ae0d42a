"""
Two spins and one motional mode driven by the spin-dependent force.

The effective Hamiltonian is

    H(t) = S_y (dF/dt p + dG/dt x) + P^2(t) sum_j d_j/2 sigma_z^(j)

with S_y = (sigma_y^(1) + sigma_y^(2))/2, x = (a + a^dag)/sqrt(2), [x, p] = i and
dF/dt = -sqrt(2) Omega(t) cos(theta(t)), dG/dt = -sqrt(2) Omega(t) sin(theta(t)).
Without the Zeeman term it generates exactly

    U(t) = exp(-i Phi S_y^2) exp(-i G S_y x) exp(-i F S_y p),  Phi = -A - F G,

so at loop closure U = exp(i A S_y^2). Spin basis order is |uu>, |ud>, |du>, |dd>
with |u> = qutip.basis(2, 0); the mode is the last tensor factor.
"""
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np
import qutip
from scipy.linalg import expm

from src.errors import InvalidParameterError, NumericFailureError, require
from src.gateConst import ModuleConst, hz2rad
from src.trajectory import fga_closed_form, fga_on_grid, fga_from_phase, segment_grid

logger = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)

# commutator-free fourth order exponential integrator
CF4_A1 = (3.0 - 2.0*np.sqrt(3.0))/12.0
CF4_A2 = (3.0 + 2.0*np.sqrt(3.0))/12.0
CF4_C1 = 0.5 - np.sqrt(3.0)/6.0
CF4_C2 = 0.5 + np.sqrt(3.0)/6.0


@dataclass(frozen=True)
class ErrorModel:
    """
    Error sources on top of the ideal gate.

    Attributes:
    static_detuning: offset epsilon of the mode frequency (rad/s)
    zeeman_peak: peak differential AC Zeeman shift per ion (Hz), scaled by P^2(t)
    heating_rate: quanta/s; > 0 switches to open-system propagation
    compensation: drive tones track omega_0 + Delta P^2(t) +- (omega_r + delta),
        which removes the mean shift of both ions
    phase_noise: accumulated detuning phase phi(t) = int_0^t epsilon(t') dt' (rad),
        for time-dependent mode-frequency noise
    """
    static_detuning: float = 0.0
    zeeman_peak: tuple = (0.0, 0.0)
    heating_rate: float = 0.0
    compensation: bool = False
    phase_noise: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        require(self.heating_rate >= 0, f"heating_rate must be >= 0, got {self.heating_rate}")
        require(len(self.zeeman_peak) == 2, "zeeman_peak needs one shift per ion")
        require(np.isfinite(self.static_detuning), "static_detuning must be finite")

    def zeeman_residual(self):
        """Per-ion Zeeman shifts (rad/s) left in the frame of the drive."""
        d = hz2rad(np.asarray(self.zeeman_peak, dtype=float))
        if self.compensation:
            d = d - d.mean()
        return d

    @property
    def has_zeeman(self):
        return bool(np.any(self.zeeman_residual() != 0.0))

    @property
    def motion_linear(self):
        """True when the analytic model is exact for this error model."""
        return not self.has_zeeman and self.heating_rate == 0.0

    def as_dict(self):
        return {
            "static_detuning_hz": self.static_detuning/(2.0*np.pi),
            "zeeman_peak_hz": [float(v) for v in self.zeeman_peak],
            "heating_rate": self.heating_rate,
            "compensation": self.compensation,
            "phase_noise": self.phase_noise is not None,
        }


@dataclass(frozen=True)
class ThermalSpec:
    nbar: float = ModuleConst.nbar
    fock_cutoff: int = ModuleConst.fock_cutoff

    def __post_init__(self):
        require(self.nbar >= 0, f"nbar must be >= 0, got {self.nbar}")
        require(int(self.fock_cutoff) >= 2, f"fock_cutoff must be >= 2, got {self.fock_cutoff}")

    def tail_weight(self):
        """Thermal probability of n >= fock_cutoff."""
        if self.nbar == 0:
            return 0.0
        return (self.nbar/(self.nbar + 1.0))**int(self.fock_cutoff)

    def mixture(self, threshold=ModuleConst.thermal_tail):
        """Fock numbers and renormalized weights of the thermal state, weights >= threshold."""
        n = np.arange(int(self.fock_cutoff))
        w = self.nbar**n/(self.nbar + 1.0)**(n + 1)
        keep = w >= threshold
        keep[0] = True
        return n[keep], w[keep]/w[keep].sum()

    def doubled(self):
        return ThermalSpec(self.nbar, 2*int(self.fock_cutoff))


@dataclass
class PopulationRecord:
    """Populations with 0, 1 and 2 ions in |up> at each time."""
    times: np.ndarray
    p0: np.ndarray
    p1: np.ndarray
    p2: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.p0, self.p1, self.p2 = (np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
                                     for p in (self.p0, self.p1, self.p2))
        total = self.p0 + self.p1 + self.p2
        if np.any(np.abs(total - 1.0) > 1e-9):
            raise NumericFailureError("populations are not normalized",
                                      error_estimate=float(np.max(np.abs(total - 1.0))))

    def rows(self):
        return np.column_stack([self.times, self.p0, self.p1, self.p2])

    def at(self, i):
        return float(self.p0[i]), float(self.p1[i]), float(self.p2[i])


@dataclass
class GateResult:
    """Outcome of a Fock-space propagation."""
    state: qutip.Qobj
    rho_spin: np.ndarray
    populations: tuple
    fidelity: float
    record: Optional[PopulationRecord] = None
    report: dict = field(default_factory=dict)


#######################################################################################
# Spin algebra

@lru_cache(maxsize=1)
def spin_basis():
    """
    Eigen-decomposition of the collective S_y.

    Returns:
    tuple: (eigenvalues m, eigenvectors V as columns, c = V^dag |dd>)
    """
    sy = 0.5*(qutip.tensor(qutip.sigmay(), qutip.qeye(2)) + qutip.tensor(qutip.qeye(2), qutip.sigmay()))
    m, v = np.linalg.eigh(sy.full())
    m = np.round(m)
    down_down = qutip.tensor(qutip.basis(2, 1), qutip.basis(2, 1)).full().ravel()
    return m, v, v.conj().T @ down_down


def bell_target(phase_sign=-1):
    """(|uu> + i*phase_sign*|dd>)/sqrt(2); phase_sign = -1 gives (|uu> - i|dd>)/sqrt(2)."""
    up, dn = qutip.basis(2, 0), qutip.basis(2, 1)
    return (qutip.tensor(up, up) + 1j*phase_sign*qutip.tensor(dn, dn)).unit()


def _as_spin_qobj(state):
    if isinstance(state, qutip.Qobj):
        if state.isket:
            state = qutip.ket2dm(state)
        if len(state.dims[0]) > 2:
            state = state.ptrace([0, 1])
        return state
    rho = np.asarray(state, dtype=complex)
    if rho.ndim == 1:
        rho = np.outer(rho, rho.conj())
    return qutip.Qobj(rho, dims=[[2, 2], [2, 2]])


def bell_fidelity(state, phase_sign=-1):
    """
    Overlap <Psi|rho_spin|Psi> with the target Bell state.

    Parameters:
    state: joint qutip state (spins x mode), spin Qobj or 4x4 density matrix / ket
    phase_sign: sign of A(tau) of the gate that produced the state
    """
    rho = _as_spin_qobj(state)
    return float(np.real(qutip.expect(rho, bell_target(phase_sign))))


def populations_from_rho(rho):
    """(p0, p1, p2) from a spin density matrix, or a stack of them."""
    d = np.real(np.diagonal(np.asarray(rho), axis1=-2, axis2=-1))
    return d[..., 3], d[..., 1] + d[..., 2], d[..., 0]


def analysis_pulse(rho_spin, phi):
    """Spin density matrix after a common pi/2 pulse with phase phi on both ions."""
    gen = np.cos(phi)*qutip.sigmax() + np.sin(phi)*qutip.sigmay()
    r1 = (-0.25j*np.pi*gen).expm()
    r = qutip.tensor(r1, r1)
    rho = _as_spin_qobj(rho_spin)
    return (r*rho*r.dag()).full()


def analysis_populations(rho_spin, phi):
    """(p0, p1, p2) after the analysis pulse."""
    p0, p1, p2 = populations_from_rho(analysis_pulse(rho_spin, phi))
    return float(p0), float(p1), float(p2)


def parity_curve(rho_spin, phases):
    """Ideal parity p0 + p2 - p1 after the analysis pulse at each phase."""
    out = []
    for phi in np.atleast_1d(phases):
        p0, p1, p2 = analysis_populations(rho_spin, phi)
        out.append(p0 + p2 - p1)
    return np.array(out)


#######################################################################################
# Analytic model

def spin_density_from_fga(f, g, a, nbar):
    """
    Spin density matrix for initial |dd> x thermal(nbar), given F, G, A.

    Exact for any Hamiltonian linear in x and p (static or time-dependent
    detuning errors included). Broadcasts over arrays of F, G, A.
    """
    m, v, c = spin_basis()
    f, g, a = (np.asarray(q, dtype=float) for q in (f, g, a))
    phase = (-a - 0.5*f*g)[..., None, None]
    decay = ((f**2 + g**2)*(2.0*nbar + 1.0)/4.0)[..., None, None]
    dm2 = (m[:, None]**2 - m[None, :]**2)
    dm = (m[:, None] - m[None, :])**2
    rho_y = np.outer(c, c.conj())*np.exp(-1j*dm2*phase - dm*decay)
    return v @ rho_y @ v.conj().T


def _check_analytic(errors):
    if errors is not None and not errors.motion_linear:
        raise InvalidParameterError("analytic model covers detuning errors only; use fock_propagate "
                                    "for Zeeman shifts or heating")


def _fga_with_errors(sol, errors, times, points_per_loop=128):
    delta = sol.delta + (errors.static_detuning if errors is not None else 0.0)
    if errors is None or errors.phase_noise is None:
        return fga_on_grid(sol.envelope, delta, times)
    # noisy phase: integrate on a breakpoint-aligned grid, then interpolate
    cycles = max(1.0, abs(delta)*sol.tau/(2.0*np.pi))
    nseg = len(sol.envelope.breakpoints()) - 1
    grid, slices = segment_grid(sol.envelope, max(3, int(np.ceil(points_per_loop*cycles/nseg)) | 1))
    theta = delta*grid + errors.phase_noise(grid)
    f, g, a = fga_from_phase(sol.envelope, grid, theta, slices)
    tc = np.clip(times, 0.0, sol.tau)
    return np.interp(tc, grid, f), np.interp(tc, grid, g), np.interp(tc, grid, a)


def analytic_populations(sol, thermal, times, errors=None):
    """
    Populations from F, G, A with exact thermal Gaussian moments.

    Parameters:
    sol: GateSolution
    thermal: ThermalSpec (only nbar is used)
    times: sample times (s); beyond tau the drive is off and populations freeze
    errors: optional ErrorModel restricted to detuning errors

    Returns:
    PopulationRecord
    """
    _check_analytic(errors)
    times = np.atleast_1d(np.asarray(times, dtype=float))
    f, g, a = _fga_with_errors(sol, errors, times)
    p0, p1, p2 = populations_from_rho(spin_density_from_fga(f, g, a, thermal.nbar))
    return PopulationRecord(times, p0, p1, p2)


def analytic_final_state(sol, thermal, errors=None):
    """Spin density matrix at t = tau from the analytic model."""
    _check_analytic(errors)
    f, g, a = _fga_with_errors(sol, errors, np.array([sol.tau]))
    return spin_density_from_fga(f[0], g[0], a[0], thermal.nbar)


def static_detuning_fidelity(sol, epsilon, thermal):
    """
    Bell fidelity when the mode frequency is off by epsilon (rad/s).

    The loop no longer closes; the residual displacement enters through the
    thermal factor (2*nbar + 1) and the phase error through A(tau).
    """
    f, g, a = fga_closed_form(sol.envelope, sol.delta + epsilon, sol.tau)
    return bell_fidelity(spin_density_from_fga(f, g, a, thermal.nbar), sol.phase_sign)


#######################################################################################
# Truncated Fock space oracle

class _Propagator:
    """CF4 step propagators for one gate, error model and Fock cutoff."""

    def __init__(self, sol, errors, cutoff):
        self.env = sol.envelope
        self.delta = sol.delta + errors.static_detuning
        self.phase_noise = errors.phase_noise
        self.n = cutoff
        self.m, self.v, self.c = spin_basis()
        self.x = qutip.position(cutoff).full()
        self.p = qutip.momentum(cutoff).full()
        d = errors.zeeman_residual()
        zeeman = 0.5*(d[0]*qutip.tensor(qutip.sigmaz(), qutip.qeye(2))
                      + d[1]*qutip.tensor(qutip.qeye(2), qutip.sigmaz())).full()
        self.zeeman_y = self.v.conj().T @ zeeman @ self.v
        self.full = errors.has_zeeman

    def _drive(self, t):
        t = np.asarray(t, dtype=float)
        theta = self.delta*t
        if self.phase_noise is not None:
            theta = theta + self.phase_noise(t)
        w = self.env.rabi(t)
        return -SQRT2*w*np.cos(theta), -SQRT2*w*np.sin(theta), self.env.shape(t)**2

    def _mode_generator(self, fdot, gdot):
        return fdot*self.p + gdot*self.x

    def step(self, t, h):
        """Propagator over [t, t+h] in the S_y basis: block list or full matrix."""
        fd, gd, pz = self._drive(np.array([t + CF4_C1*h, t + CF4_C2*h]))
        factors = []
        for w1, w2 in ((CF4_A2, CF4_A1), (CF4_A1, CF4_A2)):
            mode_h = self._mode_generator(w1*fd[0] + w2*fd[1], w1*gd[0] + w2*gd[1])
            if self.full:
                hfull = (np.kron(np.diag(self.m), mode_h)
                         + (w1*pz[0] + w2*pz[1])*np.kron(self.zeeman_y, np.eye(self.n)))
                factors.append(expm(-1j*h*hfull))
            else:
                lam, vec = np.linalg.eigh(mode_h)
                blocks = np.empty((4, self.n, self.n), dtype=complex)
                for j, mj in enumerate(self.m):
                    blocks[j] = (vec*np.exp(-1j*h*mj*lam)) @ vec.conj().T
                factors.append(blocks)
        return factors

    def apply_ket(self, factors, psi):
        """psi: (4, N, k) in the S_y basis; first factor acts first."""
        for u in factors:
            if self.full:
                psi = (u @ psi.reshape(4*self.n, -1)).reshape(psi.shape)
            else:
                psi = np.einsum("jab,jbk->jak", u, psi)
        return psi

    def apply_rho(self, factors, rho):
        """rho: (4, N, 4, N) in the S_y basis."""
        for u in factors:
            if self.full:
                r = rho.reshape(4*self.n, 4*self.n)
                rho = (u @ r @ u.conj().T).reshape(rho.shape)
            else:
                rho = np.einsum("jab,jbkc,kdc->jakd", u, rho, u.conj())
        return rho


def _heating_map(cutoff, rate, h):
    """exp(h * rate * (D[a] + D[a^dag])) acting on row-major vectorized N x N blocks."""
    a = qutip.destroy(cutoff)
    liou = rate*(qutip.lindblad_dissipator(a) + qutip.lindblad_dissipator(a.dag()))
    # a is real, so the superoperator is identical for row and column stacking
    return expm(h*liou.full())


def _time_grid(targets, t_end, h_max, breakpoints):
    """Step boundaries from 0 to t_end that include every target time and envelope breakpoint."""
    inner = np.concatenate([targets, breakpoints])
    stops = np.unique(np.concatenate([[0.0], inner[(inner > 0.0) & (inner < t_end)], [t_end]]))
    grid = [0.0]
    for a, b in zip(stops[:-1], stops[1:]):
        n = max(1, int(np.ceil((b - a)/h_max - 1e-9)))
        grid.extend(np.linspace(a, b, n + 1)[1:])
    return np.array(grid)


def max_step(sol):
    """Largest CF4 step: 200 steps per period of the faster of delta and Omega_MS."""
    rate = max(abs(sol.delta), sol.omega_ms)
    return 1.0/(200.0*rate/(2.0*np.pi))


def _propagate(sol, errors, thermal, times, step_scale=1.0):
    cutoff = int(thermal.fock_cutoff)
    ns, weights = thermal.mixture()
    if ns.max() + 8 > cutoff:
        raise InvalidParameterError(
            f"fock_cutoff {cutoff} too small for nbar={thermal.nbar} (needs > {ns.max() + 8})")
    prop = _Propagator(sol, errors, cutoff)
    m, v, c = prop.m, prop.v, prop.c
    open_system = errors.heating_rate > 0.0

    targets = np.unique(np.clip(times, 0.0, None))
    t_end = min(float(targets.max()), sol.tau)
    grid = _time_grid(targets, t_end, step_scale*max_step(sol), sol.envelope.breakpoints())

    if open_system:
        rho_th = np.diag(np.zeros(cutoff))
        rho_th[ns, ns] = weights
        state = np.einsum("j,k,ab->jakb", c, c.conj(), rho_th).astype(complex)
    else:
        state = np.zeros((4, cutoff, len(ns)), dtype=complex)
        state[:, ns, np.arange(len(ns))] = c[:, None]

    def spin_rho(st):
        if open_system:
            rho_y = np.einsum("jaka->jk", st)
        else:
            rho_y = np.einsum("jak,lak,k->jl", st, st.conj(), weights)
        return v @ rho_y @ v.conj().T

    heating_cache = {}

    def dissipate(st, h):
        key = round(h, 15)
        if key not in heating_cache:
            heating_cache[key] = _heating_map(cutoff, errors.heating_rate, h)
        blocks = st.transpose(0, 2, 1, 3).reshape(16, cutoff*cutoff)
        blocks = blocks @ heating_cache[key].T
        return blocks.reshape(4, 4, cutoff, cutoff).transpose(0, 2, 1, 3)

    recorded = {}
    if 0.0 in targets:
        recorded[0.0] = spin_rho(state)
    for t0, t1 in zip(grid[:-1], grid[1:]):
        h = t1 - t0
        factors = prop.step(t0, h)
        if open_system:
            state = dissipate(state, 0.5*h)
            state = prop.apply_rho(factors, state)
            state = dissipate(state, 0.5*h)
        else:
            state = prop.apply_ket(factors, state)
        if t1 in targets:
            recorded[t1] = spin_rho(state)

    final_rho = spin_rho(state)
    spin_at = [recorded.get(t, final_rho) if t <= t_end else final_rho for t in np.clip(times, 0.0, None)]

    # joint state in the z basis
    vz = np.kron(v, np.eye(cutoff))
    if open_system:
        joint = vz @ state.reshape(4*cutoff, 4*cutoff) @ vz.conj().T
        norm = float(np.real(np.trace(joint)))
    else:
        kets = vz @ state.reshape(4*cutoff, -1)
        joint = (kets*weights) @ kets.conj().T
        norm = float(np.min(np.sum(np.abs(state)**2, axis=(0, 1))))
    report = {"fock_cutoff": cutoff, "mixture_size": int(len(ns)), "steps": int(len(grid) - 1),
              "open_system": open_system, "full_space": prop.full, "norm": norm}
    return joint, final_rho, np.array(spin_at), report


def fock_propagate(sol, errors=None, thermal=None, times=None, check_convergence=False,
                   check_step=False, conv_tol=1e-6):
    """
    Brute-force propagation in a truncated Fock space (the oracle).

    Parameters:
    sol: GateSolution
    errors: ErrorModel (default: error free)
    thermal: ThermalSpec (default: nbar=0.4, cutoff 40)
    times: optional sample times for a population record; the final state is at tau
    check_convergence: rerun with a doubled cutoff and compare
    check_step: rerun with halved steps and compare
    conv_tol: largest accepted change in fidelity and populations

    Returns:
    GateResult
    """
    errors = errors or ErrorModel()
    thermal = thermal or ThermalSpec()
    sample = np.atleast_1d(np.asarray(times, dtype=float)) if times is not None else np.array([sol.tau])
    query = np.unique(np.concatenate([sample, [sol.tau]]))

    joint, rho, spins, report = _propagate(sol, errors, thermal, query)
    fid = bell_fidelity(rho, sol.phase_sign)

    checks = []
    if check_convergence:
        checks.append(("cutoff", thermal.doubled(), 1.0))
    if check_step:
        checks.append(("step", thermal, 0.5))
    for name, th, scale in checks:
        _, rho2, spins2, _ = _propagate(sol, errors, th, query, step_scale=scale)
        change = max(abs(bell_fidelity(rho2, sol.phase_sign) - fid),
                     float(np.max(np.abs(np.asarray(populations_from_rho(spins2))
                                         - np.asarray(populations_from_rho(spins))))))
        report[f"{name}_change"] = change
        if change > conv_tol:
            raise NumericFailureError(f"Fock propagation not converged under {name} refinement",
                                      error_estimate=change, report=report)
    if errors.heating_rate > 0 and abs(report["norm"] - 1.0) > 1e-7:
        raise NumericFailureError("trace not preserved", error_estimate=abs(report["norm"] - 1.0),
                                  report=report)

    state = qutip.Qobj(joint, dims=[[2, 2, int(thermal.fock_cutoff)], [2, 2, int(thermal.fock_cutoff)]])
    record = None
    if times is not None:
        idx = np.searchsorted(query, np.clip(sample, 0.0, None))
        p0, p1, p2 = populations_from_rho(spins[idx])
        record = PopulationRecord(sample, p0, p1, p2)
    logger.debug("fock propagation %s", report)
    return GateResult(state, rho, tuple(float(q) for q in populations_from_rho(rho)), fid, record, report)


def compensation_frequencies(sol, errors, t, qubit_freq_hz=ModuleConst.qubit_freq_hz,
                             mode_freq_hz=ModuleConst.mode_freq_hz):
    """
    Blue and red sideband tone frequencies (Hz) omega(t)/2pi = f0 + Delta P^2(t) +- (f_r + delta/2pi).

    Delta is the mean Zeeman shift of the two ions when compensation is on, 0 otherwise.
    """
    shift = float(np.mean(errors.zeeman_peak)) if errors.compensation else 0.0
    base = qubit_freq_hz + shift*sol.envelope.shape(t)**2
    offset = mode_freq_hz + sol.delta/(2.0*np.pi)
    return base + offset, base - offset
