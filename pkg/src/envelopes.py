"""
Pulse envelopes P(t) and Rabi-frequency profiles Omega(t) = Omega_MS * P(t).

Envelopes are immutable value objects evaluated lazily. Anything exposing
``rabi(t)``, ``duration`` and ``breakpoints()`` (see ``EnvelopeLike``) can be fed
to the quadrature path of the trajectory module, so custom shapes such as
Blackman pulses work without being first-class kinds.
"""
import logging
from dataclasses import dataclass, replace
from math import comb
from typing import Protocol, runtime_checkable

import numpy as np
from scipy import integrate
from scipy.linalg import hadamard

from src.errors import InvalidParameterError, require
from src.gateConst import ModuleConst

logger = logging.getLogger(__name__)


@runtime_checkable
class EnvelopeLike(Protocol):
    duration: float

    def rabi(self, t): ...

    def breakpoints(self) -> np.ndarray: ...


def _is_int(value):
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool)


def sequency_walsh(size):
    """
    Walsh functions of length ``size`` in sequency order.

    Parameters:
    size: number of segments, a power of two

    Returns:
    np.ndarray: (size, size) matrix of +1/-1; row j has exactly j sign changes
    """
    H = hadamard(size)
    changes = np.count_nonzero(np.diff(H, axis=1), axis=1)
    return H[np.argsort(changes, kind="stable")]


def walsh_signs(walsh_index):
    """Sign sequence of the sequency-ordered Walsh function of the given index."""
    require(_is_int(walsh_index) and walsh_index >= 0,
            f"walsh_index must be a non-negative integer, got {walsh_index!r}")
    size = 1 << int(walsh_index).bit_length()
    return tuple(int(s) for s in sequency_walsh(size)[int(walsh_index)])


@dataclass(frozen=True)
class PulseEnvelope:
    """
    Dimensionless pulse envelope with peak Rabi frequency ``omega_ms``.

    Attributes:
    kind: ModuleConst.isSquare, isSinN or isWalsh
    omega_ms: peak gate Rabi frequency (rad/s)
    duration: pulse length tau (s)
    n, m: exponent and lobe count of sin^n(m*pi*t/tau) (SinN only)
    walsh_index: sequency index (Walsh only)
    segments: sign of each equal-length segment (Walsh only, (1,) otherwise)
    """
    kind: str
    omega_ms: float
    duration: float
    n: int = 1
    m: int = 1
    walsh_index: int = 0
    segments: tuple = (1,)

    @property
    def alpha(self):
        return self.m*np.pi/self.duration

    def shape(self, t):
        """P(t); zero outside [0, tau]."""
        t = np.asarray(t, dtype=float)
        tau = self.duration
        inside = (t >= 0.0) & (t <= tau)
        if self.kind == ModuleConst.isSinN:
            p = np.sin(self.alpha*t)**self.n
        elif self.kind == ModuleConst.isWalsh:
            nseg = len(self.segments)
            idx = np.clip(np.floor(t/tau*nseg).astype(int), 0, nseg - 1)
            p = np.asarray(self.segments, dtype=float)[idx]
        else:
            p = np.ones_like(t)
        out = np.where(inside, p, 0.0)
        return float(out) if out.ndim == 0 else out

    def rabi(self, t):
        """Omega(t) = Omega_MS * P(t) in rad/s."""
        return self.omega_ms*self.shape(t)

    def breakpoints(self):
        """Times where the envelope or one of its derivatives is discontinuous."""
        if self.kind == ModuleConst.isWalsh:
            return np.linspace(0.0, self.duration, len(self.segments) + 1)
        if self.kind == ModuleConst.isSinN:
            return np.linspace(0.0, self.duration, self.m + 1)
        return np.array([0.0, self.duration])

    def with_duration(self, tau):
        require(tau > 0, f"duration must be positive, got {tau}")
        return replace(self, duration=float(tau))

    def with_omega(self, omega_ms):
        require(omega_ms > 0, f"omega_ms must be positive, got {omega_ms}")
        return replace(self, omega_ms=float(omega_ms))

    def label(self):
        if self.kind == ModuleConst.isSinN:
            return f"sin^{self.n}(m={self.m})"
        if self.kind == ModuleConst.isWalsh:
            return f"walsh[{self.walsh_index}]"
        return "square"


def _check_drive(omega_ms, tau):
    require(np.isfinite(omega_ms) and omega_ms > 0, f"omega_ms must be positive, got {omega_ms}")
    require(np.isfinite(tau) and tau > 0, f"tau must be positive, got {tau}")


def make_sinn(omega_ms, n=ModuleConst.sinn_n, m=ModuleConst.sinn_m, tau=1.0):
    """
    Envelope P(t) = sin^n(m*pi*t/tau) on [0, tau].

    Parameters:
    omega_ms: peak Rabi frequency (rad/s)
    n: exponent, >= 1
    m: number of lobes, >= 1
    tau: pulse length (s)

    Example:
    make_sinn(2*np.pi*1180, 2, 1, 2938e-6).shape(1469e-6) returns 1.0
    """
    _check_drive(omega_ms, tau)
    require(_is_int(n) and n >= 1, f"n must be a positive integer, got {n!r}")
    require(_is_int(m) and m >= 1, f"m must be a positive integer, got {m!r}")
    return PulseEnvelope(ModuleConst.isSinN, float(omega_ms), float(tau), n=int(n), m=int(m))


def make_square(omega_ms, tau):
    """Envelope P(t) = 1 on [0, tau], 0 elsewhere."""
    _check_drive(omega_ms, tau)
    return PulseEnvelope(ModuleConst.isSquare, float(omega_ms), float(tau))


def make_walsh(omega_ms, tau, walsh_index):
    """
    Square-amplitude envelope whose sign follows the sequency-ordered Walsh function.

    The pulse is split into 2**bit_length(walsh_index) equal segments, so index 7
    gives 8 segments with signs (+,-,+,-,+,-,+,-).
    """
    _check_drive(omega_ms, tau)
    segments = walsh_signs(walsh_index)
    return PulseEnvelope(ModuleConst.isWalsh, float(omega_ms), float(tau),
                         walsh_index=int(walsh_index), segments=segments)


def make_envelope(kind, omega_ms, tau, n=ModuleConst.sinn_n, m=ModuleConst.sinn_m, walsh_index=0):
    """Build an envelope from a kind string (square, sin2, sinn, walsh)."""
    kind = str(kind).lower()
    if kind in ("sin2", "sin^2"):
        return make_sinn(omega_ms, 2, 1, tau)
    if kind == ModuleConst.isSinN:
        return make_sinn(omega_ms, n, m, tau)
    if kind == ModuleConst.isSquare:
        return make_square(omega_ms, tau)
    if kind == ModuleConst.isWalsh:
        return make_walsh(omega_ms, tau, walsh_index)
    raise InvalidParameterError(f"unknown envelope kind: {kind}")


def evaluate(env, t):
    """Rabi frequency Omega(t) in rad/s; exactly 0 outside [0, tau]."""
    return env.rabi(t)


def sinn_energy_factor(n):
    """Mean of sin^(2n) over whole half periods, C(2n, n)/4^n."""
    return comb(2*n, n)/4.0**n


def pulse_energy(env, method="closed"):
    """
    Integral of Omega^2(t) over [0, tau] (rad^2/s).

    Parameters:
    env: envelope; arbitrary EnvelopeLike objects are integrated numerically
    method: "closed" for the analytic value where available, "quad" for
        adaptive quadrature split at the envelope breakpoints

    Returns:
    float: pulse energy, proportional to the electrical energy dissipated per gate
    """
    if method == "closed" and isinstance(env, PulseEnvelope):
        base = env.omega_ms**2*env.duration
        if env.kind == ModuleConst.isSinN:
            return base*sinn_energy_factor(env.n)
        return base
    if method not in ("closed", "quad"):
        raise InvalidParameterError(f"unknown pulse energy method: {method}")

    edges = np.asarray(env.breakpoints(), dtype=float)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        # interior point keeps segment-wise constant envelopes off their jumps
        val, _ = integrate.quad(lambda s: env.rabi(a + (b - a)*s)**2, 0.0, 1.0,
                                epsabs=0.0, epsrel=1e-13, limit=200)
        total += val*(b - a)
    return total
