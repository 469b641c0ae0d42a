"""
Statistical layer for Bell-state fidelity estimation from fluorescence counts.

Ion state |up> is bright. A shot with j bright ions gives a Poisson count with
mean j*lambda_bright + (2 - j)*lambda_dark; populations are ordered (p0, p1, p2)
by the number of ions in |up>.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, nnls
from scipy.special import logsumexp
from scipy.stats import poisson

from src.dynamics import analysis_populations, bell_target, populations_from_rho
from src.errors import (CalibrationError, FitError, IllConditionedError, InvalidParameterError,
                        require)
from src.gateConst import ModuleConst

logger = logging.getLogger(__name__)

SYMMETRIC = "symmetric"
DIVIDE = "divide"


@dataclass(frozen=True)
class HistogramModel:
    lambda_dark: float = ModuleConst.lambda_dark
    lambda_bright: float = ModuleConst.lambda_bright
    window: float = ModuleConst.detection_window

    def __post_init__(self):
        require(self.lambda_dark >= 0 and self.lambda_bright >= 0, "count rates must be >= 0")

    def check(self):
        if not self.lambda_bright > self.lambda_dark:
            raise IllConditionedError(
                f"bright rate {self.lambda_bright} does not exceed dark rate {self.lambda_dark}")

    def means(self):
        """Mean counts with 0, 1, 2 bright ions."""
        ld, lb = self.lambda_dark, self.lambda_bright
        return np.array([2.0*ld, lb + ld, 2.0*lb])


@dataclass
class CountHistogram:
    """occurrences[c] = number of shots that gave c counts."""
    occurrences: np.ndarray

    def __post_init__(self):
        self.occurrences = np.asarray(self.occurrences, dtype=np.int64)
        require(self.occurrences.ndim == 1 and np.all(self.occurrences >= 0),
                "occurrences must be a 1-d array of non-negative integers")

    @classmethod
    def from_counts(cls, counts, minlength=0):
        return cls(np.bincount(np.asarray(counts, dtype=np.int64), minlength=minlength))

    @property
    def shots(self):
        return int(self.occurrences.sum())

    @property
    def counts(self):
        return np.arange(len(self.occurrences))

    def mean(self):
        return float(np.dot(self.counts, self.occurrences)/self.shots)

    def merged(self, other):
        n = max(len(self.occurrences), len(other.occurrences))
        return CountHistogram(np.pad(self.occurrences, (0, n - len(self.occurrences)))
                              + np.pad(other.occurrences, (0, n - len(other.occurrences))))

    def resample(self, rng):
        """Bootstrap copy: same shot number drawn from the empirical distribution."""
        return CountHistogram(rng.multinomial(self.shots, self.occurrences/self.shots))

    def rows(self):
        return np.column_stack([self.counts, self.occurrences])


@dataclass
class ParityScan:
    phases: np.ndarray
    parity: np.ndarray
    shots_per_phase: int

    def __post_init__(self):
        self.phases = np.asarray(self.phases, dtype=float)
        self.parity = np.asarray(self.parity, dtype=float)
        require(len(self.phases) == len(self.parity), "phases and parity must have equal length")

    def rows(self):
        return np.column_stack([self.phases, self.parity, np.full(len(self.phases), self.shots_per_phase)])


@dataclass
class ParityFit:
    amplitude: float
    phase: float
    amplitude_stderr: float


@dataclass
class FidelityEstimate:
    mean: float
    ci68: tuple
    method: str
    spam_corrected: bool
    resamples: int = 0
    seed: int = None
    convention: str = None

    def __post_init__(self):
        lo, hi = self.ci68
        require(lo <= hi, f"confidence interval bounds out of order: {self.ci68}")

    def as_dict(self):
        return {"mean": self.mean, "ci68": [float(v) for v in self.ci68], "method": self.method,
                "spam_corrected": self.spam_corrected, "resamples": self.resamples,
                "seed": self.seed, "spam_convention": self.convention}


@dataclass
class ExperimentData:
    """One population histogram plus one histogram per analysis phase (scans merged)."""
    population: CountHistogram
    phases: np.ndarray
    phase_histograms: list
    shots_per_phase: int

    def resample(self, rng):
        return ExperimentData(self.population.resample(rng), self.phases,
                              [h.resample(rng) for h in self.phase_histograms], self.shots_per_phase)


#######################################################################################
# Count generation and population estimators

def simulate_counts(populations, model, shots, seed):
    """
    Histogram of `shots` detections of a two-ion state with the given populations.

    Parameters:
    populations: (p0, p1, p2), number of ions in |up>
    model: HistogramModel
    shots: number of detections
    seed: int, SeedSequence or Generator

    Returns:
    CountHistogram
    """
    p = np.clip(np.asarray(populations, dtype=float), 0.0, None)
    require(len(p) == 3 and abs(p.sum() - 1.0) < 1e-6, f"populations must be normalized, got {populations}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    groups = rng.multinomial(int(shots), p/p.sum())
    counts = np.concatenate([rng.poisson(mu, size=n) for mu, n in zip(model.means(), groups)])
    return CountHistogram.from_counts(counts)


def _component_logpmf(hist, model):
    return poisson.logpmf(hist.counts[None, :], model.means()[:, None])


def fit_poissonians(hist, model, tol=1e-12, max_iter=10000):
    """
    Maximum-likelihood weights of the three-component Poisson mixture.

    Component means are fixed by the model; only the weights are fitted (EM).

    Returns:
    tuple: (p0, p1, p2)
    """
    model.check()
    require(hist.shots > 0, "histogram is empty")
    logpmf = _component_logpmf(hist, model)
    occ = hist.occurrences
    used = occ > 0
    logpmf, occ = logpmf[:, used], occ[used]
    w = np.full(3, 1.0/3.0)
    for _ in range(max_iter):
        with np.errstate(divide="ignore"):
            log_joint = np.log(w)[:, None] + logpmf
        resp = np.exp(log_joint - logsumexp(log_joint, axis=0))
        new = (resp*occ).sum(axis=1)/occ.sum()
        if np.max(np.abs(new - w)) < tol:
            w = new
            break
        w = new
    else:
        logger.warning("Poisson mixture EM stopped after %d iterations", max_iter)
    w = np.clip(w, 0.0, 1.0)
    w = w/w.sum()
    return float(w[0]), float(w[1]), float(w[2])


def calibrate_model(references, window=ModuleConst.detection_window):
    """
    Count rates from reference histograms of the four prepared states.

    Parameters:
    references: histograms in the order (both dark, first bright, second bright, both bright)

    Returns:
    HistogramModel from the joint Poisson maximum-likelihood fit
    """
    references = list(references)
    require(len(references) == 4, "need four reference histograms")
    bright = np.array([0, 1, 1, 2])
    n = np.array([h.shots for h in references], dtype=float)
    total = np.array([np.dot(h.counts, h.occurrences) for h in references], dtype=float)
    require(np.all(n > 0), "reference histograms must be non-empty")

    def nll(lam):
        mu = bright*lam[1] + (2 - bright)*lam[0]
        mu = np.maximum(mu, 1e-300)
        return float(np.sum(n*mu - total*np.log(mu)))

    start = np.array([max(total[0]/n[0]/2.0, 1e-3), max(total[3]/n[3]/2.0, 1e-3)])
    res = minimize(nll, start, method="L-BFGS-B", bounds=[(0.0, None), (0.0, None)])
    if not res.success:
        raise CalibrationError(f"count-rate fit failed: {res.message}")
    ld, lb = (float(v) for v in res.x)
    # Fisher-information standard error of the rate difference
    spread = np.sqrt((lb + ld)/max(n.sum(), 1.0))
    if lb - ld <= 5.0*spread:
        raise CalibrationError(f"bright references ({lb:.3f}) not brighter than dark ({ld:.3f})")
    logger.info("calibrated lambda_dark=%.4f lambda_bright=%.4f", ld, lb)
    return HistogramModel(ld, lb, window)


def reference_histograms(model, shots=ModuleConst.reference_shots, seed=None):
    """Synthetic reference histograms for the four prepared states."""
    ss = np.random.SeedSequence(seed)
    pops = [(1, 0, 0), (0, 1, 0), (0, 1, 0), (0, 0, 1)]
    return [simulate_counts(p, model, shots, np.random.default_rng(s)) for p, s in zip(pops, ss.spawn(4))]


def confusion_matrix(model, thresholds):
    """C[i, j] = probability that a state with j bright ions lands in bin i."""
    t1, t2 = thresholds
    cdf1 = poisson.cdf(t1, model.means())
    cdf2 = poisson.cdf(t2, model.means())
    return np.vstack([cdf1, cdf2 - cdf1, 1.0 - cdf2])


def threshold_bin(hist, thresholds, model=None):
    """
    Bin fractions: counts <= t1, t1 < counts <= t2, counts > t2.

    With a model the fractions are corrected for Poisson overlap by inverting the
    confusion matrix under non-negativity.

    Returns:
    tuple: (p0, p1, p2)
    """
    t1, t2 = (int(t) for t in thresholds)
    if t1 > t2:
        raise InvalidParameterError(f"thresholds must satisfy t1 <= t2, got ({t1}, {t2})")
    require(hist.shots > 0, "histogram is empty")
    c, occ = hist.counts, hist.occurrences
    fractions = np.array([occ[c <= t1].sum(), occ[(c > t1) & (c <= t2)].sum(), occ[c > t2].sum()],
                         dtype=float)/hist.shots
    if np.count_nonzero(fractions) == 1:
        logger.warning("all shots fall in one threshold bin for thresholds (%d, %d)", t1, t2)
    if model is None:
        return tuple(float(v) for v in fractions)
    model.check()
    p, _ = nnls(confusion_matrix(model, (t1, t2)), fractions)
    p = p/p.sum() if p.sum() > 0 else fractions
    return tuple(float(v) for v in p)


def optimal_thresholds(model, prior=(1.0/3.0, 1.0/3.0, 1.0/3.0)):
    """Integer thresholds minimizing the total misclassification probability."""
    model.check()
    mu = model.means()
    cmax = int(poisson.ppf(1.0 - 1e-12, mu[-1])) + 1
    t = np.arange(cmax + 1)
    cdf = poisson.cdf(t[:, None], mu[None, :])
    prior = np.asarray(prior, dtype=float)
    t1, t2 = np.meshgrid(t, t, indexing="ij")
    correct = (prior[0]*cdf[t1, 0] + prior[1]*(cdf[t2, 1] - cdf[t1, 1]) + prior[2]*(1.0 - cdf[t2, 2]))
    correct = np.where(t1 <= t2, correct, -np.inf)
    i, j = np.unravel_index(np.argmax(correct), correct.shape)
    return int(t1[i, j]), int(t2[i, j])


def estimate_populations(hist, model, method=ModuleConst.usePoissonian, thresholds=None):
    if method == ModuleConst.usePoissonian:
        return fit_poissonians(hist, model)
    if method == ModuleConst.useThreshold:
        return threshold_bin(hist, thresholds or optimal_thresholds(model), model)
    raise InvalidParameterError(f"unknown population estimator: {method}")


#######################################################################################
# Parity and fidelity

def fit_parity(scan):
    """
    Least-squares fit parity(phi) = A cos(2 phi + phi0) with A >= 0.

    Returns:
    ParityFit (amplitude clipped to [0, 1], phase offset, amplitude standard error)
    """
    phases = np.asarray(scan.phases, dtype=float)
    if len(np.unique(np.round(phases, 12))) < 4:
        raise FitError("parity fit needs at least 4 distinct phases")
    design = np.column_stack([np.cos(2.0*phases), np.sin(2.0*phases)])
    coef, _, rank, _ = np.linalg.lstsq(design, scan.parity, rcond=None)
    if rank < 2:
        raise FitError("parity design matrix is rank deficient (phases equal modulo pi)")
    a, b = coef
    amplitude = float(np.hypot(a, b))
    phase = float(np.arctan2(-b, a))

    dof = len(phases) - 2
    resid = scan.parity - design @ coef
    s2 = float(resid @ resid)/dof if dof > 0 else 0.0
    cov = s2*np.linalg.inv(design.T @ design)
    if amplitude > 0:
        grad = np.array([a, b])/amplitude
        stderr = float(np.sqrt(max(grad @ cov @ grad, 0.0)))
    else:
        stderr = float(np.sqrt(max(np.trace(cov)/2.0, 0.0)))
    return ParityFit(min(amplitude, 1.0), phase, stderr)


def fidelity_from_parity(p_uu, p_dd, parity_amplitude):
    """F = (P_uu + P_dd)/2 + A/2."""
    for v in (p_uu, p_dd, parity_amplitude):
        require(0.0 <= v <= 1.0, f"inputs must lie in [0, 1], got {v}")
    return (p_uu + p_dd)/2.0 + parity_amplitude/2.0


def _spam_n(raw):
    return 2 if np.ndim(raw) == 0 else len(raw)


def spam_correct(raw, epsilon_spam, convention=SYMMETRIC):
    """
    Linear SPAM correction, clipped to [0, 1].

    symmetric: x_corr = (x - eps/n)/(1 - eps), n = 2 for a fidelity, len(x) for a vector
    divide:    x_corr = x/(1 - eps)
    """
    require(0.0 <= epsilon_spam < 1.0, f"epsilon_spam must lie in [0, 1), got {epsilon_spam}")
    x = np.asarray(raw, dtype=float)
    if convention == SYMMETRIC:
        out = (x - epsilon_spam/_spam_n(raw))/(1.0 - epsilon_spam)
    elif convention == DIVIDE:
        out = x/(1.0 - epsilon_spam)
    else:
        raise InvalidParameterError(f"unknown SPAM convention: {convention}")
    out = np.clip(out, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def spam_forward(value, epsilon_spam, convention=SYMMETRIC):
    """The SPAM channel that spam_correct inverts."""
    require(0.0 <= epsilon_spam < 1.0, f"epsilon_spam must lie in [0, 1), got {epsilon_spam}")
    x = np.asarray(value, dtype=float)
    if convention == SYMMETRIC:
        out = (1.0 - epsilon_spam)*x + epsilon_spam/_spam_n(value)
    elif convention == DIVIDE:
        out = (1.0 - epsilon_spam)*x
    else:
        raise InvalidParameterError(f"unknown SPAM convention: {convention}")
    return float(out) if out.ndim == 0 else out


#######################################################################################
# Synthetic experiments

def werner_state(fidelity, phase_sign=-1):
    """p |Psi><Psi| + (1 - p) I/4 with Bell fidelity `fidelity`."""
    require(0.25 <= fidelity <= 1.0, "Werner fidelity must lie in [1/4, 1]")
    p = (4.0*fidelity - 1.0)/3.0
    psi = bell_target(phase_sign).full().ravel()
    return p*np.outer(psi, psi.conj()) + (1.0 - p)*np.eye(4)/4.0


def spam_state(rho_spin, epsilon_spam):
    """
    Mix in the fidelity-1/2, zero-parity state (|uu><uu| + |dd><dd|)/2.

    The Bell fidelity maps as F -> (1 - eps) F + eps/2, the symmetric SPAM channel.
    """
    mix = np.zeros((4, 4), dtype=complex)
    mix[0, 0] = mix[3, 3] = 0.5
    return (1.0 - epsilon_spam)*np.asarray(rho_spin, dtype=complex) + epsilon_spam*mix


def synthetic_experiment(rho_spin, model, phases, shots_per_phase=ModuleConst.shots_per_phase,
                         scans=ModuleConst.scans, population_shots=None, seed=None):
    """
    Simulated population measurement and parity scans of a two-ion state.

    Parameters:
    rho_spin: 4x4 spin density matrix
    model: HistogramModel
    phases: analysis pulse phases (rad)
    shots_per_phase: shots per phase in each scan
    scans: number of phase scans, merged per phase
    population_shots: shots of the population measurement (default: all scan shots)

    Returns:
    ExperimentData
    """
    phases = np.asarray(phases, dtype=float)
    ss = np.random.SeedSequence(seed)
    child = ss.spawn(1 + len(phases)*scans)
    population_shots = population_shots or shots_per_phase*scans*len(phases)
    pops = tuple(float(v) for v in populations_from_rho(rho_spin))
    population = simulate_counts(pops, model, population_shots, np.random.default_rng(child[0]))
    hists = []
    for i, phi in enumerate(phases):
        pp = analysis_populations(rho_spin, phi)
        merged = CountHistogram(np.zeros(1, dtype=np.int64))
        for s in range(scans):
            rng = np.random.default_rng(child[1 + i*scans + s])
            merged = merged.merged(simulate_counts(pp, model, shots_per_phase, rng))
        hists.append(merged)
    return ExperimentData(population, phases, hists, shots_per_phase*scans)


def parity_scan(data, model, method=ModuleConst.usePoissonian, thresholds=None):
    """Parity p0 + p2 - p1 per phase from the phase histograms."""
    parity = []
    for hist in data.phase_histograms:
        p0, p1, p2 = estimate_populations(hist, model, method, thresholds)
        parity.append(p0 + p2 - p1)
    return ParityScan(data.phases, np.array(parity), data.shots_per_phase)


def estimate_fidelity(data, model, method=ModuleConst.usePoissonian, thresholds=None,
                      epsilon_spam=0.0, convention=SYMMETRIC):
    """
    Point estimate (P_uu + P_dd)/2 + A/2, optionally SPAM corrected.

    method "parity_combined" averages the Poissonian and threshold estimates.
    """
    if method == ModuleConst.useParityCombined:
        return 0.5*sum(estimate_fidelity(data, model, m, thresholds, epsilon_spam, convention)
                       for m in (ModuleConst.usePoissonian, ModuleConst.useThreshold))
    if method == ModuleConst.useJointML:
        raise InvalidParameterError("joint maximum-likelihood estimation is not available")
    if method == ModuleConst.useThreshold and thresholds is None:
        thresholds = optimal_thresholds(model)
    p0, _, p2 = estimate_populations(data.population, model, method, thresholds)
    fit = fit_parity(parity_scan(data, model, method, thresholds))
    fid = fidelity_from_parity(p2, p0, fit.amplitude)
    if epsilon_spam:
        fid = spam_correct(fid, epsilon_spam, convention)
    return fid


def bootstrap(data, estimator, resamples=ModuleConst.resamples, seed=None, method="custom",
              spam_corrected=False, convention=None, threads=1):
    """
    Percentile bootstrap of a fidelity estimator.

    Population and parity histograms are resampled independently with
    replacement; resample r draws from SeedSequence(seed, spawn_key=(r,)).

    Parameters:
    data: ExperimentData
    estimator: callable ExperimentData -> fidelity
    resamples: number of synthetic datasets, >= 100

    Returns:
    FidelityEstimate with the estimate on the original data and the 16th/84th
    percentiles of the resampled estimates
    """
    require(int(resamples) >= 100, f"resamples must be >= 100, got {resamples}")

    def one(r):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
        return estimator(data.resample(rng))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = np.array(list(pool.map(one, range(int(resamples)))))
    else:
        values = np.array([one(r) for r in range(int(resamples))])
    point = float(estimator(data))
    lo, hi = (float(v) for v in np.percentile(values, [16.0, 84.0]))
    return FidelityEstimate(point, (lo, hi), method, spam_corrected, int(resamples), seed, convention)
