import numpy as np
import pytest

from src.gateConst import ModuleConst, hz2rad
from src.solver import solve_sin2, solve_square, solve_walsh

OMEGA = hz2rad(ModuleConst.omega_ms_hz)


@pytest.fixture(scope="session")
def omega():
    return OMEGA


@pytest.fixture(scope="session")
def sin2_k17():
    return solve_sin2(OMEGA, 17)


@pytest.fixture(scope="session")
def sin2_k20():
    return solve_sin2(OMEGA, 20)


@pytest.fixture(scope="session")
def square7():
    return solve_square(OMEGA, 7)


@pytest.fixture(scope="session")
def square8():
    return solve_square(OMEGA, 8)


@pytest.fixture(scope="session")
def walsh8():
    return solve_walsh(OMEGA, 8, 7)


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)


class BlackmanEnvelope:
    """Custom envelope outside the built-in kinds."""

    def __init__(self, omega_ms, duration):
        self.omega_ms = omega_ms
        self.duration = duration

    def rabi(self, t):
        t = np.asarray(t, dtype=float)
        x = 2.0*np.pi*t/self.duration
        p = 0.42 - 0.5*np.cos(x) + 0.08*np.cos(2.0*x)
        out = np.where((t >= 0) & (t <= self.duration), self.omega_ms*p, 0.0)
        return float(out) if out.ndim == 0 else out

    def breakpoints(self):
        return np.array([0.0, self.duration])


@pytest.fixture
def blackman():
    return BlackmanEnvelope(OMEGA, 2e-3)
