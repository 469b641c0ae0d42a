"""
Gate parameters (tau, delta) that close the phase-space loop with |A(tau)| = pi/2.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from src.envelopes import PulseEnvelope, make_sinn, make_square, make_walsh, pulse_energy, walsh_signs
from src.errors import InvalidParameterError, NumericFailureError, UnsupportedOrderError, require
from src.gateConst import ModuleConst, rad2hz
from src.trajectory import fga_closed_form, fga_quadrature

logger = logging.getLogger(__name__)

HALF_PI = 0.5*np.pi


@dataclass(frozen=True)
class GateSolution:
    """
    Solved gate: the envelope (duration = tau), the sideband detuning and the order.

    Attributes:
    envelope: PulseEnvelope with duration set to tau
    delta: sideband detuning (rad/s)
    order: k for sin^n gates, loop count K for square and Walsh gates
    phase_sign: sign of A(tau), fixes the Bell state phase
    """
    envelope: PulseEnvelope
    delta: float
    order: int
    phase_sign: int

    @property
    def tau(self):
        return self.envelope.duration

    @property
    def omega_ms(self):
        return self.envelope.omega_ms

    @property
    def kind(self):
        return self.envelope.kind

    def label(self):
        env = self.envelope
        if env.kind == ModuleConst.isSinN:
            shape = "sin2" if (env.n, env.m) == (2, 1) else f"sin{env.n}m{env.m}"
            return f"{shape}_k{self.order}"
        if env.kind == ModuleConst.isWalsh:
            return f"walsh{env.walsh_index}_{self.order}loops"
        return f"square_{self.order}loops"

    def energy_rel(self):
        """Pulse energy in units of the single-loop square gate at equal Omega_MS (pi*Omega_MS)."""
        return pulse_energy(self.envelope)/(np.pi*self.omega_ms)

    def to_record(self, residuals=None):
        return {
            "kind": self.kind if self.kind != ModuleConst.isSinN else f"sin{self.envelope.n}",
            "omega_ms_hz": rad2hz(self.omega_ms),
            "k_or_loops": int(self.order),
            "tau_s": self.tau,
            "delta_hz": rad2hz(self.delta),
            "phase_sign": int(self.phase_sign),
            "energy_rel": self.energy_rel(),
            "closure_residuals": residuals.as_dict() if residuals is not None else None,
        }


@dataclass
class ClosureReport:
    f_residual: float
    g_residual: float
    a_residual: float
    tol: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = bool(abs(self.f_residual) < self.tol and abs(self.g_residual) < self.tol
                           and abs(self.a_residual) < self.tol)

    def as_dict(self):
        return {"F": self.f_residual, "G": self.g_residual, "A_minus_half_pi": self.a_residual,
                "tol": self.tol, "passed": self.passed}


@dataclass
class EnergyMatch:
    solution: GateSolution
    reference_energy: float
    energy: float

    @property
    def mismatch(self):
        """Relative energy difference to the reference."""
        return (self.energy - self.reference_energy)/self.reference_energy


#######################################################################################

def _check_omega(omega_ms):
    require(np.isfinite(omega_ms) and omega_ms > 0, f"omega_ms must be positive, got {omega_ms}")


def _check_order(value, name):
    require(isinstance(value, (int, np.integer)) and not isinstance(value, bool) and value >= 0,
            f"{name} must be a non-negative integer, got {value!r}")


def _finish(envelope, delta, order):
    _, _, a = fga_closed_form(envelope, delta, envelope.duration)
    return GateSolution(envelope, float(delta), int(order), int(np.sign(a)) or 1)


def sin2_phase_coefficient(k):
    """c_K with |A(tau)| = Omega^2 tau^2 c_K / pi for the sin^2 gate of order k."""
    K = 2*(k + 1)
    return 1.0/(4*K) + 1.0/(16*(K - 2)) + 1.0/(16*(K + 2))


def sinn_cycles(k, n, m):
    """Number of detuning cycles delta*tau/2pi that closes a sin^n (m lobes) gate of order k."""
    return k + n*m//2


def solve_sin2(omega_ms, k, method="closed"):
    """
    sin^2 gate of order k: delta*tau = 2*pi*(k+1) and |A(tau)| = pi/2.

    Parameters:
    omega_ms: peak Rabi frequency (rad/s)
    k: gate order, >= 1
    method: "closed" (closed-form tau) or "root" (bracketed root search on quadrature)

    Returns:
    GateSolution

    Example:
    solve_sin2(2*np.pi*1180, 17).tau returns about 2.934e-3
    """
    _check_omega(omega_ms)
    _check_order(k, "k")
    if k == 0:
        raise UnsupportedOrderError("k = 0 has no closed loop for the sin^2 envelope")

    estimate = np.pi/(omega_ms*np.sqrt(2.0*sin2_phase_coefficient(k)))
    if method == "closed":
        tau = estimate
    elif method == "root":
        tau = _root_tau(lambda tau: make_sinn(omega_ms, 2, 1, tau), k + 1, estimate)
    else:
        raise InvalidParameterError(f"unknown solve method: {method}")
    env = make_sinn(omega_ms, 2, 1, tau)
    return _finish(env, 2.0*np.pi*(k + 1)/tau, k)


def solve_sinn(omega_ms, k, n=ModuleConst.sinn_n, m=ModuleConst.sinn_m):
    """
    General sin^n gate with m lobes, delta*tau = 2*pi*(k + n*m/2).

    At fixed order F and G depend on Omega*tau only, so A(tau) scales as tau^2 and
    tau follows from one closed-form evaluation at a trial duration.
    """
    _check_omega(omega_ms)
    _check_order(k, "k")
    if k == 0:
        raise UnsupportedOrderError("k = 0 places a drive component on resonance")
    if (n*m) % 2:
        raise InvalidParameterError(f"sin^{n} with {m} lobes cannot close the loop (n*m odd)")
    cycles = sinn_cycles(k, n, m)
    trial = make_sinn(omega_ms, n, m, 1.0/omega_ms)
    _, _, a = fga_closed_form(trial, 2.0*np.pi*cycles/trial.duration, trial.duration)
    tau = trial.duration*np.sqrt(HALF_PI/abs(a))
    env = trial.with_duration(tau)
    return _finish(env, 2.0*np.pi*cycles/tau, k)


def _root_tau(make_env, cycles, estimate):
    def phase_gap(tau):
        env = make_env(tau)
        _, _, a = fga_quadrature(env, 2.0*np.pi*cycles/tau, tau, tol=1e-11)
        return abs(a) - HALF_PI

    lo, hi = 0.5*estimate, 2.0*estimate
    if phase_gap(lo)*phase_gap(hi) > 0:
        raise NumericFailureError(f"no sign change of |A|-pi/2 on [{lo:g}, {hi:g}] s")
    tau = brentq(phase_gap, lo, hi, xtol=1e-16, rtol=1e-13)
    logger.debug("root search tau=%.12g s (estimate %.12g s)", tau, estimate)
    return tau


def solve_square(omega_ms, loops):
    """Square gate with K loops: delta = 2*Omega*sqrt(K), tau = pi*sqrt(K)/Omega."""
    _check_omega(omega_ms)
    _check_order(loops, "loops")
    require(loops >= 1, "loops must be >= 1")
    delta = 2.0*omega_ms*np.sqrt(loops)
    tau = 2.0*np.pi*loops/delta
    return _finish(make_square(omega_ms, tau), delta, loops)


def solve_walsh(omega_ms, loops=8, walsh_index=7):
    """
    Walsh-modulated square gate with a whole number of loops in every segment.

    delta and tau equal the plain square gate of the same loop count; each
    segment closes independently, and the enclosed area is insensitive to the
    drive sign.
    """
    _check_omega(omega_ms)
    _check_order(loops, "loops")
    nseg = len(walsh_signs(walsh_index))
    if loops < 1 or loops % nseg:
        raise InvalidParameterError(
            f"{loops} loops cannot be split evenly over the {nseg} segments of walsh index {walsh_index}")
    delta = 2.0*omega_ms*np.sqrt(loops)
    tau = 2.0*np.pi*loops/delta
    return _finish(make_walsh(omega_ms, tau, walsh_index), delta, loops)


def verify_closure(sol, tol=ModuleConst.closure_tol, method="quadrature"):
    """
    Residuals (|F(tau)|, |G(tau)|, |A(tau)| - pi/2) of a gate solution.

    Parameters:
    sol: GateSolution
    tol: pass threshold on every residual
    method: "quadrature" or "closed"

    Returns:
    ClosureReport
    """
    if method == "quadrature":
        f, g, a = fga_quadrature(sol.envelope, sol.delta, sol.tau, tol=min(1e-10, 0.1*tol))
    elif method == "closed":
        f, g, a = fga_closed_form(sol.envelope, sol.delta, sol.tau)
    else:
        raise InvalidParameterError(f"unknown verification method: {method}")
    return ClosureReport(abs(f), abs(g), abs(a) - HALF_PI, tol)


def solve_scheme(kind, omega_ms, k=None, loops=None, walsh_index=7, n=2, m=1):
    """Dispatch on a family name (sin2, sinn, square, walsh)."""
    kind = str(kind).lower()
    if kind == "sin2":
        return solve_sin2(omega_ms, k)
    if kind == ModuleConst.isSinN:
        return solve_sinn(omega_ms, k, n, m)
    if kind == ModuleConst.isSquare:
        return solve_square(omega_ms, loops)
    if kind == ModuleConst.isWalsh:
        return solve_walsh(omega_ms, loops, walsh_index)
    raise InvalidParameterError(f"unknown gate family: {kind}")


def match_energy(reference, family, free_param=None, policy="not_above", walsh_index=7, max_order=200):
    """
    Solution in another family at equal Omega_MS whose pulse energy matches the reference.

    Parameters:
    reference: GateSolution
    family: "sin2", "square" or "walsh"
    free_param: fixes the order (k or loop count) instead of searching for it
    policy: "not_above" picks the highest order not exceeding the reference energy,
        "nearest" the order with the smallest absolute mismatch
    walsh_index: Walsh index when family is "walsh"

    Returns:
    EnergyMatch
    """
    omega = reference.omega_ms
    e_ref = pulse_energy(reference.envelope)
    family = str(family).lower()

    if family == "sin2":
        orders = range(1, max_order + 1)
        build = lambda q: solve_sin2(omega, q)
    elif family == ModuleConst.isSquare:
        orders = range(1, max_order + 1)
        build = lambda q: solve_square(omega, q)
    elif family == ModuleConst.isWalsh:
        step = len(walsh_signs(walsh_index))
        orders = range(step, max_order*step + 1, step)
        build = lambda q: solve_walsh(omega, q, walsh_index)
    else:
        raise InvalidParameterError(f"unknown gate family: {family}")

    if free_param is not None:
        sol = build(free_param)
        return EnergyMatch(sol, e_ref, pulse_energy(sol.envelope))

    if policy not in ("not_above", "nearest"):
        raise InvalidParameterError(f"unknown energy matching policy: {policy}")

    # energy grows monotonically with the order in every family
    best = None
    for q in orders:
        sol = build(q)
        energy = pulse_energy(sol.envelope)
        candidate = EnergyMatch(sol, e_ref, energy)
        if policy == "not_above":
            if energy <= e_ref*(1.0 + 1e-12) or best is None:
                best = candidate
            if energy > e_ref:
                break
        else:
            if best is None or abs(candidate.mismatch) < abs(best.mismatch):
                best = candidate
            elif energy > e_ref:
                break
    logger.info("matched %s to %s, energy mismatch %.4f", best.solution.label(), reference.label(), best.mismatch)
    return best
