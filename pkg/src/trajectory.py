"""
Phase-space functions F(t), G(t), A(t) of the spin-dependent force.

    F(t) = -sqrt(2) * int_0^t Omega(t') cos(theta(t')) dt'
    G(t) = -sqrt(2) * int_0^t Omega(t') sin(theta(t')) dt'
    A(t) =  sqrt(2) * int_0^t F(t') Omega(t') sin(theta(t')) dt'

with theta(t) = delta*t (plus the accumulated detuning error, if any). Writing
Z(t) = int_0^t Omega e^{i theta} dt' gives F + iG = -sqrt(2) Z and
A = -Im[Z^2/2 + int_0^t conj(Z) dZ], which is what the closed forms evaluate.
"""
import logging
from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.integrate import solve_ivp, cumulative_simpson

from src.envelopes import PulseEnvelope
from src.errors import InvalidParameterError, NumericFailureError, UnsupportedShapeError, require
from src.gateConst import ModuleConst

logger = logging.getLogger(__name__)

SQRT2 = np.sqrt(2.0)


@dataclass
class Trajectory:
    """Sampled (t, F, G, A) of the phase-space path of a spin eigenstate."""
    times: np.ndarray
    f: np.ndarray
    g: np.ndarray
    a: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        self.g = np.asarray(self.g, dtype=float)
        self.a = np.asarray(self.a, dtype=float)
        n = len(self.times)
        if not (len(self.f) == len(self.g) == len(self.a) == n):
            raise InvalidParameterError("trajectory sequences must have equal length")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise InvalidParameterError("trajectory times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    def radius(self):
        return np.hypot(self.f, self.g)

    def rows(self):
        return np.column_stack([self.times, self.f, self.g, self.a])


#######################################################################################
# Exact integrals of exponentials

def _moment(k, w, t):
    """int_0^t s^k e^{iws} ds, broadcast over w and t."""
    w, t = np.broadcast_arrays(np.asarray(w, dtype=float), np.asarray(t, dtype=float))
    x = w*t
    small = np.abs(x) <= 4.0

    # power series for |x| <= 4
    xs = np.where(small, x, 0.0)
    term = np.ones_like(xs, dtype=complex)
    series = term/(k + 1)
    for p in range(1, 41):
        term = term*(1j*xs)/p
        series = series + term/(k + p + 1)

    # upward recursion for |x| > 4
    xl = np.where(small, 1.0, x)
    eix = np.exp(1j*xl)
    g = (eix - 1.0)/(1j*xl)
    for j in range(1, k + 1):
        g = (eix - j*g)/(1j*xl)

    return np.where(small, series, g)*t**(k + 1)


def _pair_integral(wj, wl, t):
    """int_0^t conj(E(wj, s)) e^{i wl s} ds with E(w, s) = int_0^s e^{iwu} du."""
    wj, wl, t = np.broadcast_arrays(np.asarray(wj, dtype=float), np.asarray(wl, dtype=float),
                                    np.asarray(t, dtype=float))
    near = np.abs(wj*t) < 1e-4
    wj_safe = np.where(near, 1.0, wj)
    direct = (_moment(0, wl - wj_safe, t) - _moment(0, wl, t))/(-1j*wj_safe)
    wj_near = np.where(near, wj, 0.0)
    series = (_moment(1, wl, t) - 0.5j*wj_near*_moment(2, wl, t)
              + (-1j*wj_near)**2*_moment(3, wl, t)/6.0)
    return np.where(near, series, direct)


def fourier_components(env, delta):
    """
    Exponential components of Omega(t) e^{i delta t} on [0, tau] for sin^n envelopes.

    Returns:
    tuple: (coefficients c_j, angular frequencies w_j) with
        Omega(t) e^{i delta t} = sum_j c_j e^{i w_j t}
    """
    n = env.n
    r = np.arange(n + 1)
    coeff = env.omega_ms*(2j)**(-n)*np.array([comb(n, int(q)) for q in r], dtype=float)*(-1.0)**r
    freqs = (n - 2*r)*env.alpha + delta
    return coeff, freqs


def _fga_from_z(z, i_acc):
    f = -SQRT2*z.real
    g = -SQRT2*z.imag
    a = -np.imag(0.5*z**2 + i_acc)
    return f, g, a


def _closed_sinn(env, delta, t):
    c, w = fourier_components(env, delta)
    t = np.atleast_1d(t)
    z = np.sum(c[:, None]*_moment(0, w[:, None], t[None, :]), axis=0)
    pair = _pair_integral(w[:, None, None], w[None, :, None], t[None, None, :])
    i_acc = np.sum(np.conj(c)[:, None, None]*c[None, :, None]*pair, axis=(0, 1))
    return z, i_acc


def _closed_piecewise(env, delta, t):
    t = np.atleast_1d(t)
    edges = env.breakpoints()
    signs = np.asarray(env.segments, dtype=float)
    om = env.omega_ms
    nseg = len(signs)

    # state at each segment start
    z_start = np.zeros(nseg, dtype=complex)
    i_start = np.zeros(nseg, dtype=complex)
    for s in range(1, nseg):
        a, b = edges[s - 1], edges[s]
        dz = signs[s - 1]*om*np.exp(1j*delta*a)*_moment(0, delta, b - a)
        i_start[s] = i_start[s - 1] + np.conj(z_start[s - 1])*dz + om**2*_pair_integral(delta, delta, b - a)
        z_start[s] = z_start[s - 1] + dz

    seg = np.clip(np.searchsorted(edges, t, side="right") - 1, 0, nseg - 1)
    a = edges[seg]
    dt = t - a
    dz = signs[seg]*om*np.exp(1j*delta*a)*_moment(0, delta, dt)
    z = z_start[seg] + dz
    i_acc = i_start[seg] + np.conj(z_start[seg])*dz + om**2*_pair_integral(delta, delta, dt)
    return z, i_acc


def fga_closed_form(env, delta, t):
    """
    Closed-form F, G, A for square, Walsh and sin^n envelopes.

    Parameters:
    env: PulseEnvelope
    delta: detuning (rad/s), any real value
    t: time or array of times (s); values beyond tau are frozen at tau

    Returns:
    tuple: (F, G, A), floats for scalar t, arrays otherwise

    Example:
    fga_closed_form(make_square(w, tau), 2*np.pi/tau, tau) returns (0.0, 0.0, -2*pi*w**2/delta**2)
    """
    if not isinstance(env, PulseEnvelope) or env.kind not in (
            ModuleConst.isSquare, ModuleConst.isWalsh, ModuleConst.isSinN):
        raise UnsupportedShapeError(f"no closed form for envelope {env!r}")
    scalar = np.ndim(t) == 0
    tc = np.clip(np.asarray(t, dtype=float), 0.0, env.duration)
    if env.kind == ModuleConst.isSinN:
        z, i_acc = _closed_sinn(env, float(delta), tc)
    else:
        z, i_acc = _closed_piecewise(env, float(delta), tc)
    f, g, a = _fga_from_z(z, i_acc)
    if scalar:
        return float(f[0]), float(g[0]), float(a[0])
    return f, g, a


#######################################################################################
# Adaptive quadrature

def _integrate_fga(env, delta, times, rtol, atol):
    """Integrate the (F, G, A) system with DOP853 piecewise over the envelope breakpoints."""
    times = np.asarray(times, dtype=float)
    out = np.zeros((len(times), 3))
    tmax = min(float(times.max()), env.duration) if len(times) else 0.0
    if tmax <= 0.0:
        return out

    bp = np.asarray(env.breakpoints(), dtype=float)
    edges = np.concatenate([bp[bp < tmax], [tmax]])
    if edges[0] > 0.0:
        edges = np.concatenate([[0.0], edges])

    y = np.zeros(3)
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        margin = 1e-12*(b - a)
        lo, hi = a + margin, b - margin

        def rhs(t, y):
            w = env.rabi(min(max(t, lo), hi))
            s = np.sin(delta*t)
            return [-SQRT2*w*np.cos(delta*t), -SQRT2*w*s, SQRT2*y[0]*w*s]

        mask = (times > a) & (times <= b)
        t_eval = np.unique(np.concatenate([times[mask], [b]]))
        sol = solve_ivp(rhs, (a, b), y, method="DOP853", t_eval=t_eval, rtol=rtol, atol=atol)
        if not sol.success:
            raise NumericFailureError(f"ODE integration failed on [{a}, {b}]: {sol.message}")
        if mask.any():
            out[mask] = sol.y[:, np.searchsorted(t_eval, times[mask])].T
        y = sol.y[:, -1]

    out[times > tmax] = y
    return out


def _checked_integration(env, delta, times, tol):
    require(tol > 0, f"tol must be positive, got {tol}")
    fine = _integrate_fga(env, delta, times, rtol=1e-13, atol=tol*1e-3)
    coarse = _integrate_fga(env, delta, times, rtol=1e-11, atol=tol*1e-1)
    err = float(np.max(np.abs(fine - coarse))) if len(times) else 0.0
    if err > tol:
        raise NumericFailureError(f"quadrature did not reach tol={tol:g} (estimate {err:.3g})",
                                  error_estimate=err)
    return fine, err


def fga_quadrature(env, delta, t, tol=ModuleConst.quad_tol_fg):
    """
    F, G, A at time t by adaptive integration of the coupled system.

    A is accumulated together with F on the same adaptive grid. The error
    estimate is the difference to a looser-tolerance run; exceeding tol raises
    NumericFailureError carrying the estimate.

    Parameters:
    env: PulseEnvelope or any EnvelopeLike
    delta: detuning (rad/s)
    t: time (s), >= 0
    tol: absolute tolerance on F, G and A

    Returns:
    tuple: (F, G, A)
    """
    require(t >= 0, f"t must be non-negative, got {t}")
    vals, _ = _checked_integration(env, float(delta), np.array([float(t)]), tol)
    f, g, a = vals[0]
    return float(f), float(g), float(a)


def sample_trajectory(env, delta, num_points, method="auto", tol=ModuleConst.quad_tol_fg):
    """
    Trajectory on a uniform grid over [0, tau].

    Parameters:
    env: envelope
    delta: detuning (rad/s)
    num_points: number of samples, >= 2
    method: "closed", "quadrature" or "auto" (closed form when available)

    Returns:
    Trajectory
    """
    require(isinstance(num_points, (int, np.integer)) and num_points >= 2,
            f"num_points must be an integer >= 2, got {num_points!r}")
    times = np.linspace(0.0, env.duration, int(num_points))
    f, g, a = fga_on_grid(env, delta, times, method=method, tol=tol)
    return Trajectory(times, f, g, a)


def fga_on_grid(env, delta, times, method="auto", tol=ModuleConst.quad_tol_fg):
    """F, G, A arrays on an arbitrary grid of non-negative times."""
    times = np.asarray(times, dtype=float)
    has_closed = isinstance(env, PulseEnvelope)
    if method == "closed" or (method == "auto" and has_closed):
        return fga_closed_form(env, delta, times)
    if method not in ("auto", "quadrature"):
        raise InvalidParameterError(f"unknown trajectory method: {method}")
    order = np.argsort(times, kind="stable")
    vals = np.empty((len(times), 3))
    vals[order], _ = _checked_integration(env, float(delta), times[order], tol)
    return vals[:, 0], vals[:, 1], vals[:, 2]


#######################################################################################
# Arbitrary phase paths

def segment_grid(env, points_per_segment):
    """
    Time grid over [0, tau] containing every breakpoint, uniform inside segments.

    Returns:
    tuple: (times, segment slices) where each slice indexes one segment including
        both of its end points
    """
    require(points_per_segment >= 3, "points_per_segment must be >= 3")
    edges = np.asarray(env.breakpoints(), dtype=float)
    pieces, slices, start = [], [], 0
    for j, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        seg = np.linspace(a, b, points_per_segment)
        if j:
            seg = seg[1:]
            start -= 1
        pieces.append(seg)
        slices.append(slice(start, start + points_per_segment))
        start += points_per_segment
    return np.concatenate(pieces), slices


def fga_from_phase(env, times, theta, slices=None):
    """
    F, G, A for a sampled drive phase theta(t), e.g. delta*t plus accumulated noise.

    Integration is cumulative Simpson inside each segment, so envelope jumps
    must coincide with grid points (see segment_grid).
    """
    times = np.asarray(times, dtype=float)
    theta = np.asarray(theta, dtype=float)
    if slices is None:
        slices = [slice(0, len(times))]
    z = np.zeros(len(times), dtype=complex)
    i_acc = np.zeros(len(times), dtype=complex)
    z0, i0 = 0.0j, 0.0j
    for sl in slices:
        t = times[sl]
        # one-sided envelope values at the segment ends
        margin = 1e-12*(t[-1] - t[0])
        drive = env.rabi(np.clip(t, t[0] + margin, t[-1] - margin))*np.exp(1j*theta[sl])
        zs = z0 + _cumulative(drive, t)
        i_acc[sl] = i0 + _cumulative(np.conj(zs)*drive, t)
        z[sl] = zs
        z0, i0 = zs[-1], i_acc[sl][-1]
    return _fga_from_z(z, i_acc)


def _cumulative(y, t):
    return (cumulative_simpson(y.real, x=t, initial=0.0)
            + 1j*cumulative_simpson(y.imag, x=t, initial=0.0))
