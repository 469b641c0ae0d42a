"""
Run configuration: INI-style text with a [run] section, optional [errors], [noise]
and [tomography] sections, and one [scheme:<name>] section per gate.

    [run]
    omega_ms = 1.18 kHz
    nbar = 0.4
    seed = 7

    [scheme:sin2_k17]
    kind = sin2
    k = 17

Quantities may carry units (astropy syntax); bare numbers are read in Hz for
frequencies and s for times.
"""
import configparser
import logging
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
import astropy.units as u

from src.dynamics import ErrorModel, ThermalSpec
from src.errors import GateToolkitError, InvalidParameterError, require
from src.gateConst import ModuleConst, hz2rad
from src.noise import QUASI_STATIC, ORNSTEIN_UHLENBECK
from src.solver import solve_scheme, verify_closure
from src.tomography import SYMMETRIC, DIVIDE, HistogramModel

logger = logging.getLogger(__name__)

SCHEME_PREFIX = "scheme:"
SCHEME_KINDS = ("sin2", ModuleConst.isSinN, ModuleConst.isSquare, ModuleConst.isWalsh)


def parse_quantity(text, unit):
    """
    Value of `text` in `unit`; a bare number is taken to be in `unit`.

    Example:
    parse_quantity("1.18 kHz", u.Hz) returns 1180.0
    """
    try:
        q = u.Quantity(str(text).strip())
    except (TypeError, ValueError) as e:
        raise InvalidParameterError(f"cannot parse quantity {text!r}: {e}") from e
    if q.unit == u.dimensionless_unscaled:
        return float(q.value)
    try:
        return float(q.to_value(unit))
    except u.UnitConversionError as e:
        raise InvalidParameterError(f"{text!r} is not convertible to {unit}") from e


def parse_list(text, unit=None):
    items = [s for s in str(text).replace(";", ",").split(",") if s.strip()]
    if unit is None:
        return [s.strip() for s in items]
    return [parse_quantity(s, unit) for s in items]


@dataclass(frozen=True)
class SchemeSpec:
    kind: str
    k: int = None
    loops: int = None
    walsh_index: int = 7
    n: int = ModuleConst.sinn_n
    m: int = ModuleConst.sinn_m

    def __post_init__(self):
        require(self.kind in SCHEME_KINDS, f"unknown scheme kind {self.kind!r}, expected one of {SCHEME_KINDS}")
        if self.kind in ("sin2", ModuleConst.isSinN):
            require(self.k is not None, f"{self.kind} scheme needs k")
        else:
            require(self.loops is not None, f"{self.kind} scheme needs loops")


@dataclass
class NoiseSettings:
    fwhm_grid: list = field(default_factory=lambda: list(
        np.linspace(0.0, ModuleConst.fwhm_grid_max_hz, ModuleConst.fwhm_grid_points)))
    method: str = QUASI_STATIC
    corr_time: float = None
    samples: int = 100
    engine: str = "auto"
    expected_order: list = field(default_factory=list)


@dataclass
class TomographySettings:
    lambda_dark: float = ModuleConst.lambda_dark
    lambda_bright: float = ModuleConst.lambda_bright
    window: float = ModuleConst.detection_window
    reference_shots: int = ModuleConst.reference_shots
    shots_per_phase: int = ModuleConst.shots_per_phase
    scans: int = ModuleConst.scans
    phases: int = 24
    epsilon_spam: float = ModuleConst.epsilon_spam
    convention: str = SYMMETRIC
    resamples: int = ModuleConst.resamples
    method: str = ModuleConst.usePoissonian
    true_fidelity: float = None
    scheme: str = None

    def model(self):
        return HistogramModel(self.lambda_dark, self.lambda_bright, self.window)


@dataclass
class RunConfig:
    """
    Everything a CLI command needs.

    Attributes:
    omega_ms_hz: peak gate Rabi frequency Omega_MS/2pi (Hz)
    schemes: scheme name -> SchemeSpec, in file order
    seed: root seed of every stochastic command (None: deterministic commands only)
    """
    omega_ms_hz: float = ModuleConst.omega_ms_hz
    nbar: float = ModuleConst.nbar
    fock_cutoff: int = ModuleConst.fock_cutoff
    seed: int = None
    threads: int = 1
    out: str = "out"
    num_points: int = 401
    time_points: int = 50
    t_max_over_tau: float = 1.0
    evolve_engine: str = "analytic"
    errors: ErrorModel = field(default_factory=ErrorModel)
    noise: NoiseSettings = field(default_factory=NoiseSettings)
    tomography: TomographySettings = field(default_factory=TomographySettings)
    schemes: dict = field(default_factory=dict)
    source: str = None

    def __post_init__(self):
        require(self.omega_ms_hz > 0, f"omega_ms must be positive, got {self.omega_ms_hz}")
        require(int(self.threads) >= 1, "threads must be >= 1")
        require(int(self.num_points) >= 2, "num_points must be >= 2")
        require(int(self.time_points) >= 1, "time_points must be >= 1")
        require(self.noise.method in (QUASI_STATIC, ORNSTEIN_UHLENBECK),
                f"unknown noise method {self.noise.method!r}")
        require(self.tomography.convention in (SYMMETRIC, DIVIDE),
                f"unknown SPAM convention {self.tomography.convention!r}")
        missing = [s for s in self.noise.expected_order if s not in self.schemes]
        require(not missing, f"expected order names unknown schemes: {missing}")

    @property
    def omega_ms(self):
        return hz2rad(self.omega_ms_hz)

    def thermal(self):
        return ThermalSpec(self.nbar, self.fock_cutoff)

    def require_seed(self, command):
        if self.seed is None:
            raise InvalidParameterError(f"command '{command}' is stochastic and needs a seed (--seed or [run] seed)")
        return int(self.seed)

    def solutions(self, verify=False):
        """Solve every scheme; with verify, also return the closure reports."""
        sols, reports = {}, {}
        for name, spec in self.schemes.items():
            try:
                sols[name] = solve_scheme(spec.kind, self.omega_ms, k=spec.k, loops=spec.loops,
                                          walsh_index=spec.walsh_index, n=spec.n, m=spec.m)
            except GateToolkitError as e:
                raise InvalidParameterError(f"scheme '{name}' is not solvable: {e}") from e
            if verify:
                reports[name] = verify_closure(sols[name])
        return (sols, reports) if verify else sols

    def as_dict(self):
        d = asdict(self)
        d["errors"] = self.errors.as_dict()
        d["schemes"] = {name: asdict(spec) for name, spec in self.schemes.items()}
        return d


#######################################################################################

def _get(section, key, convert, default):
    if section is None or key not in section:
        return default
    raw = section.get(key).strip()
    if raw == "" or raw.lower() == "none":
        return None
    try:
        return convert(raw)
    except (TypeError, ValueError) as e:
        if isinstance(e, InvalidParameterError):
            raise
        raise InvalidParameterError(f"[{section.name}] {key} = {raw!r}: {e}") from e


def _int(text):
    return int(float(text)) if float(text).is_integer() else int(text)


def _bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean")


def _hz(text):
    return parse_quantity(text, u.Hz)


def _seconds(text):
    return parse_quantity(text, u.s)


def _errors(section):
    if section is None:
        return ErrorModel()
    detuning = _get(section, "static_detuning", _hz, 0.0) or 0.0
    zeeman = _get(section, "zeeman_peak", lambda t: parse_list(t, u.Hz), [0.0, 0.0]) or [0.0, 0.0]
    require(len(zeeman) == 2, "zeeman_peak needs two values (one per ion)")
    return ErrorModel(static_detuning=hz2rad(detuning), zeeman_peak=tuple(zeeman),
                      heating_rate=_get(section, "heating_rate", _hz, 0.0) or 0.0,
                      compensation=bool(_get(section, "compensation", _bool, False)))


def _noise(section):
    out = NoiseSettings()
    if section is None:
        return out
    grid = _get(section, "fwhm_grid", lambda t: parse_list(t, u.Hz), None)
    if grid is None:
        fmax = _get(section, "fwhm_max", _hz, ModuleConst.fwhm_grid_max_hz)
        points = _get(section, "fwhm_points", _int, ModuleConst.fwhm_grid_points)
        grid = list(np.linspace(0.0, fmax, points))
    out.fwhm_grid = [float(f) for f in grid]
    out.method = _get(section, "method", str.lower, out.method)
    out.corr_time = _get(section, "corr_time", _seconds, None)
    out.samples = _get(section, "samples", _int, out.samples)
    out.engine = _get(section, "engine", str.lower, out.engine)
    out.expected_order = _get(section, "expected_order", parse_list, []) or []
    return out


def _tomography(section):
    out = TomographySettings()
    if section is None:
        return out
    for key, convert in (("lambda_dark", float), ("lambda_bright", float), ("window", _seconds),
                         ("reference_shots", _int), ("shots_per_phase", _int), ("scans", _int),
                         ("phases", _int), ("epsilon_spam", float), ("convention", str.lower),
                         ("resamples", _int), ("method", str.lower), ("true_fidelity", float),
                         ("scheme", str)):
        setattr(out, key, _get(section, key, convert, getattr(out, key)))
    return out


def _scheme(name, section):
    kind = _get(section, "kind", str.lower, None)
    require(kind is not None, f"[scheme:{name}] needs a kind")
    if kind == "sin2":
        n, m = 2, 1
    else:
        n = _get(section, "n", _int, ModuleConst.sinn_n)
        m = _get(section, "m", _int, ModuleConst.sinn_m)
    return SchemeSpec(kind=kind, k=_get(section, "k", _int, None), loops=_get(section, "loops", _int, None),
                      walsh_index=_get(section, "walsh_index", _int, 7), n=n, m=m)


def parse_scheme_token(token):
    """
    Scheme name and SchemeSpec from a compact token.

    Example:
    "sin2:20" -> sin2 k=20, "square:8" -> 8 loops, "walsh:8:7" -> 8 loops with walsh index 7,
    "sinn:5:4:1" -> sin^4 with one lobe, order 5
    """
    parts = [p.strip().lower() for p in str(token).split(":")]
    require(len(parts) >= 2 and all(parts), f"scheme token {token!r} must look like kind:order[:...]")
    kind, rest = parts[0], parts[1:]
    try:
        values = [int(p) for p in rest]
    except ValueError as e:
        raise InvalidParameterError(f"scheme token {token!r} has a non-integer field") from e
    if kind == "sin2":
        spec = SchemeSpec(kind, k=values[0])
    elif kind == ModuleConst.isSinN:
        require(len(values) == 3, "sinn token needs order, n and m")
        spec = SchemeSpec(kind, k=values[0], n=values[1], m=values[2])
    elif kind == ModuleConst.isWalsh:
        spec = SchemeSpec(kind, loops=values[0], walsh_index=values[1] if len(values) > 1 else 7)
    else:
        spec = SchemeSpec(kind, loops=values[0])
    if spec.kind in ("sin2", ModuleConst.isSinN):
        name = f"{kind}_k{spec.k}" if kind == "sin2" else f"sin{spec.n}m{spec.m}_k{spec.k}"
    elif spec.kind == ModuleConst.isWalsh:
        name = f"walsh{spec.walsh_index}_{spec.loops}loops"
    else:
        name = f"square_{spec.loops}loops"
    return name, spec


def parse_config(text, source=None):
    """
    RunConfig from configuration text.

    Raises:
    InvalidParameterError for malformed text, bad units or unknown values
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.Error as e:
        raise InvalidParameterError(f"malformed configuration: {e}") from e

    run = parser["run"] if parser.has_section("run") else None
    schemes = {}
    for name in parser.sections():
        if name.startswith(SCHEME_PREFIX):
            key = name[len(SCHEME_PREFIX):].strip()
            require(key != "", "scheme section needs a name")
            schemes[key] = _scheme(key, parser[name])

    cfg = RunConfig(
        omega_ms_hz=_get(run, "omega_ms", _hz, ModuleConst.omega_ms_hz),
        nbar=_get(run, "nbar", float, ModuleConst.nbar),
        fock_cutoff=_get(run, "fock_cutoff", _int, ModuleConst.fock_cutoff),
        seed=_get(run, "seed", _int, None),
        threads=_get(run, "threads", _int, 1),
        out=_get(run, "out", str, "out"),
        num_points=_get(run, "num_points", _int, 401),
        time_points=_get(run, "time_points", _int, 50),
        t_max_over_tau=_get(run, "t_max_over_tau", float, 1.0),
        evolve_engine=_get(run, "evolve_engine", str.lower, "analytic"),
        errors=_errors(parser["errors"] if parser.has_section("errors") else None),
        noise=_noise(parser["noise"] if parser.has_section("noise") else None),
        tomography=_tomography(parser["tomography"] if parser.has_section("tomography") else None),
        schemes=schemes,
        source=source,
    )
    logger.debug("loaded %d scheme(s) from %s", len(schemes), source or "<config>")
    return cfg


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise InvalidParameterError(f"config file not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))
