"""
Batch front-end: solve | trajectory | evolve | noise-sweep | parity.

Exit codes: 0 on success, 1 for configuration or input errors and numerical
failures, 2 when an asserted invariant does not hold.
"""
import json
import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated, Optional

import numpy as np
import typer

from src.config import RunConfig, load_config
from src.dynamics import (analytic_final_state, analytic_populations, bell_fidelity, fock_propagate)
from src.errors import GateToolkitError, InvariantViolation, require
from src.gateConst import ModuleConst
from src.noise import QUASI_STATIC, check_robustness_order, sweep
from src.outputs import (HISTOGRAM_HEADER, PARITY_HEADER, POPULATION_HEADER, SWEEP_HEADER,
                         TRAJECTORY_HEADER, write_csv, write_json)
from src.tomography import (bootstrap, calibrate_model, estimate_fidelity, fit_parity, optimal_thresholds,
                            parity_scan, reference_histograms, spam_state, synthetic_experiment,
                            werner_state)
from src.trajectory import sample_trajectory

logger = logging.getLogger(__name__)

app = typer.Typer(help="Amplitude-modulated Molmer-Sorensen gate toolkit.", no_args_is_help=True,
                  add_completion=False)

ConfigOpt = Annotated[Optional[Path], typer.Option("--config", "-c", help="INI run configuration")]
OutOpt = Annotated[Optional[Path], typer.Option("--out", "-o", help="output directory")]
SeedOpt = Annotated[Optional[int], typer.Option("--seed", help="root seed, overrides the config")]
ThreadsOpt = Annotated[Optional[int], typer.Option("--threads", help="worker threads")]
PlotOpt = Annotated[bool, typer.Option("--plot", help="also render PNG figures")]
VerboseOpt = Annotated[bool, typer.Option("--verbose", "-v", help="log progress to stderr")]


@contextmanager
def _exit_codes():
    try:
        yield
    except InvariantViolation as e:
        typer.echo(f"Error: {e}", err=True)
        if e.details:
            typer.echo(json.dumps(e.details, indent=2, default=str), err=True)
        raise typer.Exit(code=2)
    except GateToolkitError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(code=1)


def _setup(config, out, seed, threads, verbose):
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = load_config(config) if config is not None else RunConfig()
    if seed is not None:
        cfg.seed = seed
    if threads is not None:
        require(threads >= 1, f"threads must be >= 1, got {threads}")
        cfg.threads = threads
    if out is not None:
        cfg.out = str(out)
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    return cfg


def _meta(cfg, command, seeds=None):
    return {"command": command, "config": cfg.as_dict(), "seeds": seeds or {}, "threads": cfg.threads}


#######################################################################################

def cmd_solve(cfg):
    """Solve and verify every scheme; closure failures raise InvariantViolation."""
    sols, reports = cfg.solutions(verify=True)
    records = []
    for name, sol in sols.items():
        rec = sol.to_record(reports[name])
        rec["name"] = name
        records.append(rec)
    path = write_json(Path(cfg.out)/"solutions.json", records, meta=_meta(cfg, "solve"))
    failed = [r["name"] for r in records if not r["closure_residuals"]["passed"]]
    if failed:
        raise InvariantViolation(f"closure verification failed for {failed}",
                                 details={r["name"]: r["closure_residuals"] for r in records})
    return path, records


def cmd_trajectory(cfg, plot=False):
    sols = cfg.solutions()
    trajs, paths = {}, []
    for name, sol in sols.items():
        trajs[name] = sample_trajectory(sol.envelope, sol.delta, int(cfg.num_points))
        paths.append(write_csv(Path(cfg.out)/f"trajectory_{name}.csv", TRAJECTORY_HEADER, trajs[name].rows(),
                               meta=_meta(cfg, "trajectory")))
    if plot and trajs:
        from src.visualize import plot_trajectories
        paths.append(plot_trajectories(trajs, Path(cfg.out)/"trajectories.png", envelopes=sols))
    return paths, trajs


def _time_grid(cfg, tau):
    if int(cfg.time_points) == 1:
        return np.array([0.0])
    return np.linspace(0.0, cfg.t_max_over_tau*tau, int(cfg.time_points))


def cmd_evolve(cfg, plot=False):
    """
    Populations against t/tau per scheme.

    The analytic model is used when it is exact for the configured errors and
    evolve_engine is "analytic"; otherwise the truncated Fock propagation runs.
    """
    sols = cfg.solutions()
    thermal = cfg.thermal()
    records, paths, summary = {}, [], {}
    for name, sol in sols.items():
        times = _time_grid(cfg, sol.tau)
        if cfg.evolve_engine == "analytic" and cfg.errors.motion_linear:
            rec = analytic_populations(sol, thermal, times, cfg.errors)
            fid = bell_fidelity(analytic_final_state(sol, thermal, cfg.errors), sol.phase_sign)
        else:
            res = fock_propagate(sol, cfg.errors, thermal, times)
            rec, fid = res.record, res.fidelity
        records[name] = (rec, sol.tau)
        summary[name] = {"fidelity": fid, "infidelity": 1.0 - fid, "tau_s": sol.tau}
        rows = ([t, p0, p1, p2, t/sol.tau] for t, p0, p1, p2 in rec.rows())
        paths.append(write_csv(Path(cfg.out)/f"populations_{name}.csv", POPULATION_HEADER, rows,
                               meta=_meta(cfg, "evolve")))
    paths.append(write_json(Path(cfg.out)/"evolve_summary.json", summary, meta=_meta(cfg, "evolve")))
    if plot and records:
        from src.visualize import plot_populations
        paths.append(plot_populations(records, Path(cfg.out)/"populations.png"))
    return paths, records


def cmd_noise_sweep(cfg, plot=False):
    """
    Fidelity against mode-frequency FWHM for every scheme.

    The CSV is written before the robustness order and the zero-noise rows are checked.
    """
    ns = cfg.noise
    seeds = {}
    if ns.method != QUASI_STATIC:
        seeds["noise"] = cfg.require_seed("noise-sweep")
    sols = cfg.solutions()
    rows = sweep(list(sols.values()), ns.fwhm_grid, method=ns.method, thermal=cfg.thermal(), errors=cfg.errors,
                 samples=ns.samples, seed=seeds.get("noise"), corr_time=ns.corr_time, names=list(sols),
                 engine=ns.engine, threads=cfg.threads)
    path = write_csv(Path(cfg.out)/"noise_sweep.csv", SWEEP_HEADER,
                     ([r.scheme, r.fwhm_hz, r.fidelity, r.stderr, 1.0 - r.fidelity] for r in rows),
                     meta=_meta(cfg, "noise-sweep", seeds))
    paths = [path]
    if plot and rows:
        from src.visualize import plot_sweep
        paths.append(plot_sweep(rows, Path(cfg.out)/"noise_sweep.png"))

    if ns.method == QUASI_STATIC:
        off = [r.as_tuple() for r in rows if r.fwhm_hz == 0 and abs(1.0 - r.fidelity) > 1e-8]
        if off:
            raise InvariantViolation("noise-free fidelity differs from 1", details={"rows": off})
    if ns.expected_order:
        check_robustness_order(rows, ns.expected_order)
    return paths, rows


def _parity_state(cfg):
    """Spin density matrix of the synthetic experiment and its phase sign."""
    ts = cfg.tomography
    sols = cfg.solutions()
    name = ts.scheme or (next(iter(sols)) if sols else None)
    sol = sols.get(name) if name is not None else None
    require(name is None or sol is not None, f"tomography scheme '{name}' is not configured")
    phase_sign = sol.phase_sign if sol is not None else -1
    if ts.true_fidelity is not None:
        return werner_state(ts.true_fidelity, phase_sign), phase_sign, name
    require(sol is not None, "parity needs a scheme or [tomography] true_fidelity")
    thermal = cfg.thermal()
    if cfg.errors.motion_linear:
        return analytic_final_state(sol, thermal, cfg.errors), phase_sign, name
    return fock_propagate(sol, cfg.errors, thermal).rho_spin, phase_sign, name


def cmd_parity(cfg, plot=False):
    """
    Synthetic parity experiment and fidelity estimates.

    Steps: gate state, forward SPAM channel, reference calibration, two merged
    phase scans plus a population measurement, Poissonian and threshold
    estimates with bootstrap intervals, SPAM correction.
    """
    ts = cfg.tomography
    seed = cfg.require_seed("parity")
    ref_seed, exp_seed, boot_seed = (int(s) for s in np.random.SeedSequence(seed).generate_state(3))
    seeds = {"root": seed, "references": ref_seed, "experiment": exp_seed, "bootstrap": boot_seed}

    rho, phase_sign, name = _parity_state(cfg)
    true_fid = bell_fidelity(rho, phase_sign)
    rho_meas = spam_state(rho, ts.epsilon_spam)

    model = calibrate_model(reference_histograms(ts.model(), ts.reference_shots, ref_seed), ts.window)
    thresholds = optimal_thresholds(model)
    phases = np.linspace(0.0, 2.0*np.pi, int(ts.phases), endpoint=False)
    data = synthetic_experiment(rho_meas, model=ts.model(), phases=phases, shots_per_phase=ts.shots_per_phase,
                                scans=ts.scans, seed=exp_seed)

    estimates = {}
    for method in (ModuleConst.usePoissonian, ModuleConst.useThreshold):
        estimator = (lambda d, m=method: estimate_fidelity(d, model, m, thresholds, ts.epsilon_spam, ts.convention))
        est = bootstrap(data, estimator, ts.resamples, boot_seed, method=method,
                        spam_corrected=ts.epsilon_spam > 0, convention=ts.convention, threads=cfg.threads)
        estimates[method] = est.as_dict()

    scan = parity_scan(data, model, ts.method, thresholds)
    fit = fit_parity(scan)
    meta = _meta(cfg, "parity", seeds)
    out = Path(cfg.out)
    paths = [
        write_csv(out/"parity_scan.csv", PARITY_HEADER, scan.rows(), meta=meta),
        write_csv(out/"population_histogram.csv", HISTOGRAM_HEADER, data.population.rows(), meta=meta),
        write_json(out/"fidelity.json", {
            "scheme": name,
            "true_fidelity": true_fid,
            "epsilon_spam": ts.epsilon_spam,
            "model": {"lambda_dark": model.lambda_dark, "lambda_bright": model.lambda_bright,
                      "window_s": model.window},
            "thresholds": list(thresholds),
            "parity_fit": {"amplitude": fit.amplitude, "phase_rad": fit.phase,
                           "amplitude_stderr": fit.amplitude_stderr, "method": ts.method},
            "estimates": estimates,
        }, meta=meta),
    ]
    if plot:
        from src.visualize import plot_parity
        paths.append(plot_parity(scan, fit, out/"parity_scan.png"))
    return paths, estimates


#######################################################################################

@app.command()
def solve(config: ConfigOpt = None, out: OutOpt = None, seed: SeedOpt = None, threads: ThreadsOpt = None,
          verbose: VerboseOpt = False):
    """Solve (tau, delta) for every configured scheme and verify closure."""
    with _exit_codes():
        cfg = _setup(config, out, seed, threads, verbose)
        _, records = cmd_solve(cfg)
        for r in records:
            typer.echo(f"{r['name']}: tau = {r['tau_s']*1e6:.2f} us, delta/2pi = {r['delta_hz']:.2f} Hz, "
                       f"energy = {r['energy_rel']:.4f}")


@app.command()
def trajectory(config: ConfigOpt = None, out: OutOpt = None, seed: SeedOpt = None, threads: ThreadsOpt = None,
               plot: PlotOpt = False, verbose: VerboseOpt = False):
    """Phase-space trajectories (t, F, G, A) per scheme."""
    with _exit_codes():
        cfg = _setup(config, out, seed, threads, verbose)
        paths, _ = cmd_trajectory(cfg, plot)
        typer.echo(f"wrote {len(paths)} file(s) to {cfg.out}")


@app.command()
def evolve(config: ConfigOpt = None, out: OutOpt = None, seed: SeedOpt = None, threads: ThreadsOpt = None,
           plot: PlotOpt = False, verbose: VerboseOpt = False):
    """Spin populations during the gate."""
    with _exit_codes():
        cfg = _setup(config, out, seed, threads, verbose)
        paths, _ = cmd_evolve(cfg, plot)
        typer.echo(f"wrote {len(paths)} file(s) to {cfg.out}")


@app.command("noise-sweep")
def noise_sweep(config: ConfigOpt = None, out: OutOpt = None, seed: SeedOpt = None, threads: ThreadsOpt = None,
                plot: PlotOpt = False, verbose: VerboseOpt = False):
    """Robustness to mode-frequency noise."""
    with _exit_codes():
        cfg = _setup(config, out, seed, threads, verbose)
        paths, _ = cmd_noise_sweep(cfg, plot)
        typer.echo(f"wrote {len(paths)} file(s) to {cfg.out}")


@app.command()
def parity(config: ConfigOpt = None, out: OutOpt = None, seed: SeedOpt = None, threads: ThreadsOpt = None,
           plot: PlotOpt = False, verbose: VerboseOpt = False):
    """Synthetic parity scan and bootstrap fidelity estimates."""
    with _exit_codes():
        cfg = _setup(config, out, seed, threads, verbose)
        _, estimates = cmd_parity(cfg, plot)
        for method, est in estimates.items():
            lo, hi = est["ci68"]
            typer.echo(f"{method}: F = {est['mean']:.5f} [{lo:.5f}, {hi:.5f}]")
