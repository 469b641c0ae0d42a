"""
PNG renderings of the gate data: phase-space trajectories, population dynamics,
robustness sweep and parity scan. File output only (Agg backend).
"""
import logging
from pathlib import Path

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from src.colorEnumerator import colorEnumerator

logger = logging.getLogger(__name__)


def _save(fig, output_file):
    output_file = Path(output_file)
    output_file.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output_file, dpi=200, bbox_inches="tight")
    plt.close(fig)
    logger.info("figure saved to %s", output_file)
    return output_file


def plot_trajectories(trajectories, output_file, envelopes=None):
    """
    Phase-space paths (G, F) of a spin eigenstate, one curve per scheme.

    Parameters:
    trajectories: dict scheme name -> Trajectory
    output_file: PNG path
    envelopes: optional dict scheme name -> GateSolution, drawn as an inset of P(t)
    """
    palette = colorEnumerator()
    fig, ax = plt.subplots(figsize=(6, 6))
    colors = {}
    for name, traj in trajectories.items():
        colors[name] = palette.next_color()
        ax.plot(traj.g, traj.f, color=colors[name], linewidth=1.2, label=name)
    ax.plot([0.0], [0.0], "k+", markersize=10)
    ax.set_xlabel("G")
    ax.set_ylabel("F")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="upper right", fontsize=8)

    if envelopes:
        inset = ax.inset_axes([0.06, 0.06, 0.3, 0.22])
        for name, sol in envelopes.items():
            t = np.linspace(0.0, sol.tau, 400)
            inset.plot(t/sol.tau, sol.envelope.shape(t), color=colors.get(name, "k"), linewidth=1.0)
        inset.set_xlabel("t/τ", fontsize=7)
        inset.set_ylabel("P(t)", fontsize=7)
        inset.tick_params(labelsize=6)
    return _save(fig, output_file)


def plot_populations(records, output_file):
    """
    Populations p0, p1, p2 against t/tau.

    Parameters:
    records: dict scheme name -> (PopulationRecord, tau)
    """
    fig, ax = plt.subplots(figsize=(7, 4))
    styles = {"p0": "-", "p1": ":", "p2": "--"}
    palette = colorEnumerator()
    for name, (rec, tau) in records.items():
        color = palette.next_color()
        for key, style in styles.items():
            ax.plot(rec.times/tau, getattr(rec, key), style, color=color, label=f"{name} {key}")
    ax.set_xlabel("t/τ")
    ax.set_ylabel("population")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=7, ncol=2)
    ax.grid(True, linestyle="--", alpha=0.5)
    return _save(fig, output_file)


def plot_sweep(rows, output_file):
    """Infidelity against mode-frequency FWHM, log scale, one curve per scheme."""
    fig, ax = plt.subplots(figsize=(7, 4))
    palette = colorEnumerator()
    for name in dict.fromkeys(r.scheme for r in rows):
        sel = [r for r in rows if r.scheme == name and r.fwhm_hz > 0]
        if not sel:
            continue
        fwhm = np.array([r.fwhm_hz for r in sel])
        infid = np.clip(1.0 - np.array([r.fidelity for r in sel]), 1e-12, None)
        err = np.array([r.stderr for r in sel])
        ax.errorbar(fwhm, infid, yerr=err if np.any(err > 0) else None, marker="o", markersize=3,
                    color=palette.next_color(), label=name)
    ax.set_yscale("log")
    ax.set_xlabel("FWHM (Hz)")
    ax.set_ylabel("infidelity")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", linestyle="--", alpha=0.4)
    return _save(fig, output_file)


def plot_parity(scan, fit, output_file):
    """Measured parity with the fitted A cos(2 phi + phi0)."""
    fig, ax = plt.subplots(figsize=(7, 4))
    color = colorEnumerator().next_color()
    ax.plot(scan.phases, scan.parity, "o", color=color, markersize=4, label="data")
    phi = np.linspace(np.min(scan.phases), np.max(scan.phases), 400)
    ax.plot(phi, fit.amplitude*np.cos(2.0*phi + fit.phase), "-", color="k", linewidth=1.0,
            label=f"fit A = {fit.amplitude:.4f}")
    ax.set_xlabel("analysis phase (rad)")
    ax.set_ylabel("parity")
    ax.set_ylim(-1.05, 1.05)
    ax.legend(fontsize=8)
    return _save(fig, output_file)
