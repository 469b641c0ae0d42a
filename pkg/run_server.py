# server.py
from mcp.server.fastmcp import FastMCP
import json
import numpy as np

# Create an MCP server
mcp = FastMCP("mcp-server-msgate")


def _solve(kind, omega_ms_hz, k=None, loops=None, walsh_index=7, n=2, m=1):
    from src.solver import solve_scheme
    from src.gateConst import hz2rad
    return solve_scheme(kind, hz2rad(omega_ms_hz), k=k, loops=loops, walsh_index=walsh_index, n=n, m=m)


def _errors(static_detuning_hz=0.0, zeeman_peak_hz=None, heating_rate=0.0, compensation=False):
    from src.dynamics import ErrorModel
    from src.gateConst import hz2rad
    zeeman = tuple(zeeman_peak_hz) if zeeman_peak_hz else (0.0, 0.0)
    return ErrorModel(hz2rad(static_detuning_hz), zeeman, heating_rate, compensation)


def _dumps(payload):
    from src.outputs import jsonable
    return json.dumps(jsonable(payload), indent=2)


# 1 gate design

# 1.1 Solve gate parameters
@mcp.tool()
def solve_gate(
    kind: str,
    omega_ms_hz: float = 1180.0,
    k: int = None,
    loops: int = None,
    walsh_index: int = 7,
    n: int = 2,
    m: int = 1
) -> str:
    """
    Solve the gate duration tau and detuning delta that close the phase-space loop with |A(tau)| = pi/2.

    Parameters:
    kind: gate family, one of "sin2", "sinn", "square", "walsh"
    omega_ms_hz: peak gate Rabi frequency Omega_MS/2pi (unit: Hz)
    k: gate order for "sin2" and "sinn" (>= 1)
    loops: number of phase-space loops for "square" and "walsh"
    walsh_index: sequency-ordered Walsh index for "walsh" (default 7)
    n, m: exponent and lobe count for "sinn"

    Returns:
    str: JSON record with kind, omega_ms_hz, k_or_loops, tau_s, delta_hz, phase_sign,
        energy_rel (pulse energy relative to the single-loop square gate) and the
        quadrature closure residuals

    Example:
    solve_gate("sin2", 1180.0, k=17)
    """
    try:
        from src.solver import verify_closure
        sol = _solve(kind, omega_ms_hz, k, loops, walsh_index, n, m)
        return _dumps(sol.to_record(verify_closure(sol)))
    except Exception as e:
        return f"Error: Gate solution failed - {str(e)}"


# 1.2 Energy-matched partner gate
@mcp.tool()
def match_gate_energy(
    kind: str,
    family: str,
    omega_ms_hz: float = 1180.0,
    k: int = None,
    loops: int = None,
    policy: str = "not_above"
) -> str:
    """
    Find the gate of another family whose pulse energy matches a reference gate.

    Parameters:
    kind, k, loops: the reference gate (see solve_gate)
    family: family of the partner gate, "sin2", "square" or "walsh"
    omega_ms_hz: common peak Rabi frequency (unit: Hz)
    policy: "not_above" (highest order not exceeding the reference energy) or "nearest"

    Returns:
    str: JSON with the partner record and the relative energy mismatch

    Example:
    match_gate_energy("square", "sin2", loops=7)
    """
    try:
        from src.solver import match_energy
        ref = _solve(kind, omega_ms_hz, k, loops)
        match = match_energy(ref, family, policy=policy)
        return _dumps({"reference": ref.to_record(), "match": match.solution.to_record(),
                       "energy_mismatch": match.mismatch})
    except Exception as e:
        return f"Error: Energy matching failed - {str(e)}"


# 1.3 Phase-space trajectory
@mcp.tool()
def gate_trajectory(
    kind: str,
    omega_ms_hz: float = 1180.0,
    k: int = None,
    loops: int = None,
    walsh_index: int = 7,
    num_points: int = 201,
    output_file: str = None
) -> str:
    """
    Sample the phase-space trajectory (t, F, G, A) of a solved gate.

    Parameters:
    kind, omega_ms_hz, k, loops, walsh_index: gate specification (see solve_gate)
    num_points: number of uniformly spaced samples over [0, tau] (>= 2)
    output_file: optional CSV path (absolute path); without it the samples are returned

    Returns:
    str: JSON list of [t_s, F, G, A] rows, or the path of the written CSV
    """
    try:
        from src.trajectory import sample_trajectory
        sol = _solve(kind, omega_ms_hz, k, loops, walsh_index)
        traj = sample_trajectory(sol.envelope, sol.delta, int(num_points))
        if output_file:
            from src.outputs import TRAJECTORY_HEADER, write_csv
            write_csv(output_file, TRAJECTORY_HEADER, traj.rows())
            return f"Trajectory with {len(traj)} points saved to {output_file}"
        return _dumps(traj.rows())
    except Exception as e:
        return f"Error: Trajectory sampling failed - {str(e)}"


# 2 gate dynamics

# 2.1 Population dynamics
@mcp.tool()
def gate_populations(
    kind: str,
    omega_ms_hz: float = 1180.0,
    k: int = None,
    loops: int = None,
    walsh_index: int = 7,
    nbar: float = 0.4,
    time_points: int = 50,
    t_max_over_tau: float = 1.0,
    static_detuning_hz: float = 0.0,
    zeeman_peak_hz: list[float] = None,
    heating_rate: float = 0.0,
    compensation: bool = False,
    engine: str = "auto"
) -> str:
    """
    Spin populations p0, p1, p2 (number of ions in |up>) during the gate.

    Parameters:
    kind, omega_ms_hz, k, loops, walsh_index: gate specification (see solve_gate)
    nbar: initial mean phonon number
    time_points: number of samples on [0, t_max_over_tau * tau]
    static_detuning_hz: mode-frequency offset (unit: Hz)
    zeeman_peak_hz: peak differential AC Zeeman shift of each ion [d1, d2] (unit: Hz)
    heating_rate: motional heating rate (unit: quanta/s)
    compensation: track the mean Zeeman shift with the drive tones
    engine: "analytic", "fock" or "auto" (analytic unless Zeeman shifts or heating are set)

    Returns:
    str: JSON list of [t_s, p0, p1, p2] rows
    """
    try:
        from src.dynamics import ThermalSpec, analytic_populations, fock_propagate
        sol = _solve(kind, omega_ms_hz, k, loops, walsh_index)
        errors = _errors(static_detuning_hz, zeeman_peak_hz, heating_rate, compensation)
        times = np.linspace(0.0, t_max_over_tau*sol.tau, int(time_points))
        thermal = ThermalSpec(nbar)
        if engine == "analytic" or (engine == "auto" and errors.motion_linear):
            record = analytic_populations(sol, thermal, times, errors)
        elif engine in ("fock", "auto"):
            record = fock_propagate(sol, errors, thermal, times).record
        else:
            return f"Error: Invalid engine '{engine}'. Valid engines: ['analytic', 'fock', 'auto']"
        return _dumps(record.rows())
    except Exception as e:
        return f"Error: Population dynamics failed - {str(e)}"


# 2.2 Gate fidelity under errors
@mcp.tool()
def gate_fidelity(
    kind: str,
    omega_ms_hz: float = 1180.0,
    k: int = None,
    loops: int = None,
    walsh_index: int = 7,
    nbar: float = 0.4,
    fock_cutoff: int = 40,
    static_detuning_hz: float = 0.0,
    zeeman_peak_hz: list[float] = None,
    heating_rate: float = 0.0,
    compensation: bool = False,
    check_convergence: bool = False
) -> str:
    """
    Bell-state fidelity of a gate under static detuning, AC Zeeman shifts and heating,
    by propagation in a truncated Fock space.

    Parameters:
    kind, omega_ms_hz, k, loops, walsh_index: gate specification (see solve_gate)
    nbar: initial mean phonon number
    fock_cutoff: Fock space dimension of the motional mode
    static_detuning_hz, zeeman_peak_hz, heating_rate, compensation: error model (see gate_populations)
    check_convergence: repeat with a doubled cutoff and report the change

    Returns:
    str: JSON with fidelity, infidelity, final populations and the propagation report

    Example:
    gate_fidelity("sin2", k=17, zeeman_peak_hz=[20.0, 0.0])
    """
    try:
        from src.dynamics import ThermalSpec, fock_propagate
        sol = _solve(kind, omega_ms_hz, k, loops, walsh_index)
        errors = _errors(static_detuning_hz, zeeman_peak_hz, heating_rate, compensation)
        res = fock_propagate(sol, errors, ThermalSpec(nbar, fock_cutoff), check_convergence=check_convergence)
        return _dumps({"fidelity": res.fidelity, "infidelity": 1.0 - res.fidelity,
                       "populations": res.populations, "report": res.report, "errors": errors.as_dict()})
    except Exception as e:
        return f"Error: Fidelity simulation failed - {str(e)}"


# 3 noise robustness
@mcp.tool()
def noise_sweep(
    schemes: str = "sin2:20,walsh:8:7,square:8",
    omega_ms_hz: float = 1180.0,
    fwhm_max_hz: float = 1000.0,
    fwhm_points: int = 11,
    method: str = "quasistatic",
    nbar: float = 0.4,
    samples: int = 100,
    seed: int = None,
    threads: int = 1
) -> str:
    """
    Gate fidelity against the FWHM of mode-frequency noise for several schemes.

    Parameters:
    schemes: comma separated scheme tokens, e.g. "sin2:20,walsh:8:7,square:8"
        (kind:order for sin2, kind:loops for square, kind:loops:index for walsh)
    omega_ms_hz: common peak Rabi frequency (unit: Hz)
    fwhm_max_hz: largest FWHM of the grid, which starts at 0 (unit: Hz)
    fwhm_points: number of grid points
    method: "quasistatic" (Gauss-Hermite average) or "ou" (Ornstein-Uhlenbeck Monte Carlo)
    samples, seed: Monte Carlo sample count and root seed (method "ou")
    threads: worker threads

    Returns:
    str: JSON list of rows {scheme, fwhm_hz, fidelity, stderr}
    """
    try:
        from src.config import parse_scheme_token
        from src.dynamics import ThermalSpec
        from src.noise import sweep
        named = [parse_scheme_token(t) for t in schemes.split(",") if t.strip()]
        sols = [_solve(spec.kind, omega_ms_hz, spec.k, spec.loops, spec.walsh_index, spec.n, spec.m)
                for _, spec in named]
        grid = np.linspace(0.0, fwhm_max_hz, int(fwhm_points))
        rows = sweep(sols, grid, method=method, thermal=ThermalSpec(nbar), samples=samples, seed=seed,
                     names=[name for name, _ in named], threads=threads)
        return _dumps([{"scheme": r.scheme, "fwhm_hz": r.fwhm_hz, "fidelity": r.fidelity, "stderr": r.stderr}
                       for r in rows])
    except Exception as e:
        return f"Error: Noise sweep failed - {str(e)}"


# 4 fidelity estimation
@mcp.tool()
def parity_fidelity(
    true_fidelity: float = 0.995,
    seed: int = 1,
    epsilon_spam: float = 0.015,
    shots_per_phase: int = 300,
    scans: int = 2,
    phases: int = 24,
    lambda_dark: float = 2.0,
    lambda_bright: float = 30.0,
    resamples: int = 1000,
    method: str = "poissonian",
    threads: int = 1
) -> str:
    """
    Synthetic parity experiment on a Werner-type state and its bootstrap fidelity estimate.

    Parameters:
    true_fidelity: Bell fidelity of the simulated state (0.25 to 1)
    seed: root seed
    epsilon_spam: SPAM error applied to the data and corrected in the estimate
    shots_per_phase, scans, phases: scan layout (scans are merged per phase)
    lambda_dark, lambda_bright: mean counts per detection window of a dark/bright ion
    resamples: bootstrap resamples (>= 100)
    method: "poissonian", "threshold" or "parity_combined"

    Returns:
    str: JSON FidelityEstimate {mean, ci68, method, spam_corrected, resamples, seed, spam_convention}
    """
    try:
        from src.tomography import (HistogramModel, bootstrap, calibrate_model, estimate_fidelity,
                                    optimal_thresholds, reference_histograms, spam_state,
                                    synthetic_experiment, werner_state)
        ref_seed, exp_seed, boot_seed = (int(s) for s in np.random.SeedSequence(seed).generate_state(3))
        truth = HistogramModel(lambda_dark, lambda_bright)
        rho = spam_state(werner_state(true_fidelity), epsilon_spam)
        model = calibrate_model(reference_histograms(truth, seed=ref_seed))
        thresholds = optimal_thresholds(model)
        grid = np.linspace(0.0, 2.0*np.pi, int(phases), endpoint=False)
        data = synthetic_experiment(rho, truth, grid, shots_per_phase, scans, seed=exp_seed)
        est = bootstrap(data, lambda d: estimate_fidelity(d, model, method, thresholds, epsilon_spam),
                        resamples, boot_seed, method=method, spam_corrected=epsilon_spam > 0,
                        convention="symmetric", threads=threads)
        return _dumps(est.as_dict())
    except Exception as e:
        return f"Error: Fidelity estimation failed - {str(e)}"


# 5 visualization tools
@mcp.tool()
def plot_gate_figures(config_file: str, output_dir: str, seed: int = None) -> str:
    """
    Render the trajectory, population, noise sweep and parity figures of a run configuration.

    Parameters:
    config_file: INI run configuration (absolute path), see the README for the format
    output_dir: directory for the PNG and CSV files (absolute path)
    seed: root seed, overrides the configuration; the parity figure needs one

    Returns:
    str: Status message listing the written figures
    """
    try:
        from src.config import load_config
        from src.cli import cmd_evolve, cmd_noise_sweep, cmd_parity, cmd_trajectory
        cfg = load_config(config_file)
        cfg.out = output_dir
        if seed is not None:
            cfg.seed = seed
        written = []
        for command in (cmd_trajectory, cmd_evolve, cmd_noise_sweep):
            paths, _ = command(cfg, plot=True)
            written += [str(p) for p in paths if str(p).endswith(".png")]
        if cfg.seed is not None:
            paths, _ = cmd_parity(cfg, plot=True)
            written += [str(p) for p in paths if str(p).endswith(".png")]
        return f"Figures saved: {', '.join(written)}"
    except Exception as e:
        return f"Error: Plot generation failed - {str(e)}"


if __name__ == "__main__":
    # Start the MCP server
    mcp.run(transport="stdio")
