"""
Motional-frequency noise: FWHM conversion, quasi-static averages, Ornstein-Uhlenbeck
Monte Carlo and robustness sweeps.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.integrate import cumulative_trapezoid

from src.dynamics import (ErrorModel, ThermalSpec, analytic_final_state, bell_fidelity,
                          fock_propagate, static_detuning_fidelity)
from src.errors import InvalidParameterError, InvariantViolation, NumericFailureError, require
from src.gateConst import ModuleConst, hz2rad
from src.trajectory import segment_grid

logger = logging.getLogger(__name__)

QUASI_STATIC = "quasistatic"
ORNSTEIN_UHLENBECK = "ou"


@dataclass(frozen=True)
class NoiseSpec:
    """
    Mode-frequency noise.

    Attributes:
    kind: "quasistatic" or "ou"
    fwhm: full width at half maximum of the mode-frequency distribution (Hz)
    corr_time: correlation time (s), OU only; None means 10 gate durations
    samples: Monte Carlo samples
    seed: root seed of the per-sample random streams
    """
    kind: str = QUASI_STATIC
    fwhm: float = 0.0
    corr_time: float = None
    samples: int = 1
    seed: int = None

    def __post_init__(self):
        require(self.kind in (QUASI_STATIC, ORNSTEIN_UHLENBECK), f"unknown noise kind: {self.kind}")
        require(self.fwhm >= 0, f"fwhm must be >= 0, got {self.fwhm}")
        require(int(self.samples) >= 1, f"samples must be >= 1, got {self.samples}")
        require(self.corr_time is None or self.corr_time > 0, "corr_time must be positive")

    @property
    def sigma(self):
        """Standard deviation of the detuning in rad/s."""
        return hz2rad(fwhm_to_sigma(self.fwhm))


@dataclass
class FidelitySummary:
    mean: float
    stderr: float
    samples: int


@dataclass
class SweepRow:
    scheme: str
    fwhm_hz: float
    fidelity: float
    stderr: float

    def as_tuple(self):
        return self.scheme, self.fwhm_hz, self.fidelity, self.stderr


def fwhm_to_sigma(fwhm):
    """Gaussian standard deviation from its FWHM: fwhm / (2 sqrt(2 ln 2))."""
    require(np.all(np.asarray(fwhm) >= 0), "fwhm must be >= 0")
    return fwhm*ModuleConst.fwhm_to_sigma


def gauss_hermite_mean(func, sigma, nodes=16, tol=ModuleConst.hermite_tol, max_nodes=256):
    """
    E[func(eps)] for eps ~ Normal(0, sigma^2), doubling the node count until converged.

    Returns:
    tuple: (mean, last change, node count)
    """
    if sigma == 0:
        return func(0.0), 0.0, 1

    def rule(n):
        x, w = hermgauss(n)
        return float(np.sum(w*np.array([func(np.sqrt(2.0)*sigma*xi) for xi in x]))/np.sqrt(np.pi))

    prev = rule(nodes)
    while True:
        nodes *= 2
        cur = rule(nodes)
        change = abs(cur - prev)
        if change < tol:
            return cur, change, nodes
        if nodes >= max_nodes:
            raise NumericFailureError(f"Gauss-Hermite average not converged at {nodes} nodes",
                                      error_estimate=change)
        prev = cur


def quasistatic_average(sol, noise, thermal, nodes=None):
    """
    Mean Bell fidelity over a static mode-frequency offset eps ~ Normal(0, sigma^2).

    Parameters:
    sol: GateSolution
    noise: NoiseSpec with kind "quasistatic"
    thermal: ThermalSpec
    nodes: fixed Gauss-Hermite node count; None doubles from 16 until the
        result changes by less than 1e-8

    Returns:
    float: mean fidelity
    """
    return _quasistatic(sol, noise, thermal, nodes).mean


def _quasistatic(sol, noise, thermal, nodes=None):
    if noise.kind != QUASI_STATIC:
        raise InvalidParameterError("quasistatic_average needs a quasistatic NoiseSpec")
    func = lambda eps: static_detuning_fidelity(sol, eps, thermal)
    sigma = noise.sigma
    if nodes is not None:
        if sigma == 0:
            return FidelitySummary(func(0.0), 0.0, 1)
        x, w = hermgauss(int(nodes))
        mean = float(np.sum(w*np.array([func(np.sqrt(2.0)*sigma*xi) for xi in x]))/np.sqrt(np.pi))
        return FidelitySummary(mean, 0.0, int(nodes))
    mean, change, used = gauss_hermite_mean(func, sigma)
    return FidelitySummary(mean, change, used)


def ou_path(times, sigma, corr_time, rng):
    """
    Stationary Ornstein-Uhlenbeck samples on a grid by exact discretization.

    x(0) ~ Normal(0, sigma^2); x_{i+1} = a_i x_i + sigma sqrt(1 - a_i^2) xi_i
    with a_i = exp(-dt_i / corr_time).
    """
    times = np.asarray(times, dtype=float)
    xi = rng.standard_normal(len(times))
    a = np.exp(-np.diff(times)/corr_time)
    out = np.empty(len(times))
    out[0] = sigma*xi[0]
    for i in range(1, len(times)):
        out[i] = a[i - 1]*out[i - 1] + sigma*np.sqrt(1.0 - a[i - 1]**2)*xi[i]
    return out


def _sample_stream(seed, stream, index):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(stream) + (int(index),)))


def _noise_grid(sol, points_per_loop=128):
    cycles = max(1.0, abs(sol.delta)*sol.tau/(2.0*np.pi))
    nseg = len(sol.envelope.breakpoints()) - 1
    return segment_grid(sol.envelope, max(3, int(np.ceil(points_per_loop*cycles/nseg)) | 1))[0]


def _choose_engine(errors, engine):
    if engine == "auto":
        return "analytic" if errors.motion_linear else "fock"
    if engine not in ("analytic", "fock"):
        raise InvalidParameterError(f"unknown propagation engine: {engine}")
    if engine == "analytic" and not errors.motion_linear:
        raise InvalidParameterError("analytic engine cannot include Zeeman shifts or heating")
    return engine


def ou_noise_mc(sol, noise, errors=None, thermal=None, stream=(0, 0), engine="auto", threads=1):
    """
    Monte Carlo over Ornstein-Uhlenbeck mode-frequency trajectories eps(t).

    Each sample draws from its own stream SeedSequence(seed, spawn_key=stream + (i,)),
    so the summary is identical for any thread count.

    Parameters:
    sol: GateSolution
    noise: NoiseSpec with kind "ou" and a seed
    errors: ErrorModel applied on top of the noise
    thermal: ThermalSpec
    stream: leading spawn-key entries, e.g. (scheme index, fwhm index)
    engine: "auto" (analytic unless Zeeman or heating), "analytic" or "fock"

    Returns:
    FidelitySummary
    """
    if noise.kind != ORNSTEIN_UHLENBECK:
        raise InvalidParameterError("ou_noise_mc needs an OU NoiseSpec")
    require(noise.seed is not None, "ou_noise_mc needs a seed")
    errors = errors or ErrorModel()
    thermal = thermal or ThermalSpec()
    engine = _choose_engine(errors, engine)
    corr_time = noise.corr_time or ModuleConst.ou_corr_time_factor*sol.tau
    sigma = noise.sigma
    grid = _noise_grid(sol)

    def one(i):
        rng = _sample_stream(noise.seed, stream, i)
        eps = ou_path(grid, sigma, corr_time, rng)
        phase = cumulative_trapezoid(eps, grid, initial=0.0)
        model = replace(errors, phase_noise=lambda t, g=grid, ph=phase: np.interp(t, g, ph))
        if engine == "analytic":
            return bell_fidelity(analytic_final_state(sol, thermal, model), sol.phase_sign)
        return fock_propagate(sol, model, thermal).fidelity

    n = int(noise.samples)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = np.array(list(pool.map(one, range(n))))
    else:
        values = np.array([one(i) for i in range(n)])
    stderr = float(np.std(values, ddof=1)/np.sqrt(n)) if n > 1 else 0.0
    return FidelitySummary(float(np.mean(values)), stderr, n)


def sweep(sols, fwhm_grid, method=QUASI_STATIC, thermal=None, errors=None, samples=100, seed=None,
          corr_time=None, names=None, engine="auto", threads=1):
    """
    Fidelity for every (scheme, fwhm) pair, rows in scheme-major order.

    Parameters:
    sols: GateSolutions
    fwhm_grid: FWHM values (Hz)
    method: "quasistatic" or "ou"
    names: scheme labels, defaulting to GateSolution.label()

    Returns:
    list[SweepRow]
    """
    thermal = thermal or ThermalSpec()
    sols = list(sols)
    names = list(names) if names is not None else [s.label() for s in sols]
    grid = [float(f) for f in fwhm_grid]
    if method == ORNSTEIN_UHLENBECK:
        require(seed is not None, "an OU sweep needs a seed")
    elif method != QUASI_STATIC:
        raise InvalidParameterError(f"unknown sweep method: {method}")

    cells = [(i, j) for i in range(len(sols)) for j in range(len(grid))]

    def evaluate(cell):
        i, j = cell
        sol, fwhm = sols[i], grid[j]
        if method == QUASI_STATIC:
            res = _quasistatic(sol, NoiseSpec(QUASI_STATIC, fwhm), thermal)
        else:
            spec = NoiseSpec(ORNSTEIN_UHLENBECK, fwhm, corr_time, samples, seed)
            res = ou_noise_mc(sol, spec, errors, thermal, stream=(i, j), engine=engine)
        logger.info("%s fwhm=%.1f Hz fidelity=%.10f", names[i], fwhm, res.mean)
        return SweepRow(names[i], fwhm, res.mean, res.stderr)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(evaluate, cells))
    return [evaluate(c) for c in cells]


def check_robustness_order(rows, expected, skip_zero=True):
    """
    Assert infidelity(expected[0]) < infidelity(expected[1]) < ... at every fwhm.

    Raises:
    InvariantViolation listing every violating grid point
    """
    table = {(r.scheme, r.fwhm_hz): r.fidelity for r in rows}
    fwhms = sorted({r.fwhm_hz for r in rows})
    bad = []
    for f in fwhms:
        if skip_zero and f == 0:
            continue
        fids = [table.get((name, f)) for name in expected]
        if any(v is None for v in fids):
            raise InvalidParameterError(f"sweep has no row for every scheme at fwhm {f}")
        if not all(a > b for a, b in zip(fids[:-1], fids[1:])):
            bad.append({"fwhm_hz": f, "fidelity": dict(zip(expected, fids))})
    if bad:
        raise InvariantViolation(f"robustness order {' < '.join(expected)} violated at "
                                 f"{len(bad)} grid point(s)", details={"violations": bad})
