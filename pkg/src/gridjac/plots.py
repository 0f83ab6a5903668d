"""Figure rendering for the scenario report path.

Figures are written next to the delimited outputs; they display what the
CSV/JSON files already contain and are never parsed back.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def trajectory_figure(traj, columns, path, event_times=(), title=""):
    """Time series of selected trajectory columns with event markers."""
    fig, axes = plt.subplots(len(columns), 1, sharex=True,
                             figsize=(8, 2.2 * len(columns)), squeeze=False)
    t = traj.t
    for ax, name in zip(axes[:, 0], columns):
        ax.plot(t, traj.column(name), lw=0.4)
        for te in event_times:
            ax.axvline(te, color="crimson", ls="--", lw=0.8)
        ax.set_ylabel(name)
        ax.grid(True, alpha=0.3)
    axes[-1, 0].set_xlabel("t [s]")
    if title:
        axes[0, 0].set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def mode_map_figure(analytic_eigs, estimated_eigs, path, critical=None):
    """Complex-plane scatter of analytic vs estimated spectra."""
    fig, ax = plt.subplots(figsize=(6, 5))
    a = np.asarray(analytic_eigs, dtype=complex)
    e = np.asarray(estimated_eigs, dtype=complex)
    ax.scatter(a.real, a.imag, marker="o", facecolors="none",
               edgecolors="tab:blue", label="analytic")
    ax.scatter(e.real, e.imag, marker="x", color="tab:red", label="estimated")
    if critical is not None:
        ax.scatter([np.real(critical)], [np.imag(critical)], s=120,
                   facecolors="none", edgecolors="black", label="critical")
    ax.axvline(0.0, color="gray", lw=0.8)
    ax.set_xlabel("Re [1/s]")
    ax.set_ylabel("Im [rad/s]")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def prony_figure(t, signal, recon, path, title=""):
    """Fitted-series overlay for the Prony stage."""
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(t, signal, lw=0.6, label="signal")
    ax.plot(t, recon, lw=0.8, ls="--", label="prony fit")
    ax.set_xlabel("t [s]")
    ax.grid(True, alpha=0.3)
    ax.legend()
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
