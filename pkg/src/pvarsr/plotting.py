"""Figure rendering for the report paths.

All functions write PNG files next to the delimited outputs; nothing is
shown interactively.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import ComparisonReport, output_signals


def save_trajectory_figure(traj, path, columns=None, title=None):
    """Stacked time-series panels for selected state/input columns."""
    columns = columns or list(traj.schema.states)
    fig, axes = plt.subplots(len(columns), 1, sharex=True,
                             figsize=(8, 1.6 * len(columns)), squeeze=False)
    t = traj.times
    for ax, name in zip(axes[:, 0], columns):
        ax.plot(t, traj.column(name), lw=0.9)
        ax.set_ylabel(name)
        ax.grid(alpha=0.3)
    axes[-1, 0].set_xlabel("t [s]")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_comparison_figure(report: ComparisonReport, path, title=None):
    """Physical vs data-driven outputs on shared axes, one panel per output."""
    ref_out = output_signals(report.reference)
    cand_out = output_signals(report.candidate)
    names = list(ref_out)
    fig, axes = plt.subplots(len(names), 1, sharex=True,
                             figsize=(8, 2.2 * len(names)), squeeze=False)
    t = report.reference.times
    for ax, name in zip(axes[:, 0], names):
        ax.plot(t, ref_out[name], label="physical", lw=1.0)
        ax.plot(t, cand_out[name], label="data-driven", lw=1.0, ls="--")
        ax.set_ylabel(name)
        ax.grid(alpha=0.3)
    axes[0, 0].legend(loc="best", fontsize=8)
    axes[-1, 0].set_xlabel("t [s]")
    fig.suptitle(title or report.scenario)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_sweep_figure(rows, path, outputs=None):
    """Per-output RMSE versus the scalar threshold, log y-scale."""
    lams = [r["lambda"] for r in rows]
    names = outputs or (list(rows[0]["outputs"]) if rows[0]["outputs"] else [])
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if names:
        for name in names:
            ax.plot(lams, [r["outputs"].get(name, np.nan) for r in rows],
                    marker="o", label=name)
    else:
        ax.plot(lams, [float(np.sum(r["state_rmse"])) for r in rows],
                marker="o", label="total state RMSE")
    ax.set_yscale("log")
    ax.set_xlabel("threshold")
    ax.set_ylabel("RMSE")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def save_step_response_figure(times, response, tau_i, path):
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(times, response, label="designed loop")
    ax.plot(times, 1.0 - np.exp(-times / tau_i), ls="--",
            label="first-order target")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("step response")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
