"""Head-to-head comparison of physical and data-driven runs.

Output conventions used throughout the reports:

* v_dc  -- DC-link voltage state, volts.
* Q     -- instantaneous reactive power at the PCC, Q = -1.5 * v_sd * i_gq.
* P_PV  -- PV array power, v_PV * i_PV (two-stage; i_PV is a state).

The convention line is written into every report header.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .arsr import per_state_rmse
from .errors import GridMismatch, NonFinite
from .simulator import FaultSpec, SimSystem, Trajectory, integrate

Q_CONVENTION = "Q = -1.5 * v_sd * i_gq (PCC, dq frame)"


def output_signals(traj: Trajectory) -> dict[str, np.ndarray]:
    """Named output time series derived from a trajectory."""
    out = {"v_dc": traj.column("v_dc")}
    out["Q"] = -1.5 * traj.column("v_sd") * traj.column("i_gq")
    if "i_PV" in traj.schema.states:  # two-stage
        out["P_PV"] = traj.column("v_PV") * traj.column("i_PV")
    return out


def output_rmse(reference: Trajectory, candidate: Trajectory,
                outputs=None) -> dict[str, float]:
    ref_out = output_signals(reference)
    cand_out = output_signals(candidate)
    names = outputs if outputs is not None else list(ref_out)
    rmse = {}
    for name in names:
        d = ref_out[name] - cand_out[name]
        rmse[name] = float(np.sqrt(np.mean(d ** 2)))
    return rmse


@dataclass
class ComparisonReport:
    """RMSE summary of one scenario, plus the raw trajectories."""

    scenario: str
    output_rmse: dict[str, float]
    state_rmse: np.ndarray
    reference: Trajectory
    candidate: Trajectory
    lambdas: Optional[np.ndarray] = None
    windows: dict[str, dict[str, float]] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write(f"# scenario: {self.scenario}\n")
            fh.write(f"# convention: {Q_CONVENTION}\n")
            if self.lambdas is not None:
                fh.write("# lambda: "
                         + ",".join(repr(float(l)) for l in self.lambdas) + "\n")
            fh.write("scenario,output,rmse,window\n")
            for name, val in self.output_rmse.items():
                fh.write(f"{self.scenario},{name},{val!r},full\n")
            for window, rmses in self.windows.items():
                for name, val in rmses.items():
                    fh.write(f"{self.scenario},{name},{val!r},{window}\n")
            for k, state in enumerate(self.reference.schema.states):
                fh.write(f"{self.scenario},state:{state},"
                         f"{float(self.state_rmse[k])!r},full\n")

    def write_plot_data(self, out_dir, stem):
        """Two-column t,value files, one per curve per system."""
        import os
        t = self.reference.times
        for label, traj in (("physical", self.reference),
                            ("datadriven", self.candidate)):
            for name, series in output_signals(traj).items():
                path = os.path.join(out_dir, f"{stem}_{name}_{label}.dat")
                np.savetxt(path, np.column_stack([t, series]),
                           fmt="%.17g", header="t,value", comments="# ",
                           delimiter=",")


def compare_models(reference: Trajectory, candidate: Trajectory,
                   outputs=None, scenario: str = "comparison",
                   lambdas=None) -> ComparisonReport:
    """Full-horizon RMSE between two matched runs."""
    if len(reference) != len(candidate) or reference.dt != candidate.dt:
        raise GridMismatch("runs must share the time grid")
    return ComparisonReport(
        scenario=scenario,
        output_rmse=output_rmse(reference, candidate, outputs),
        state_rmse=per_state_rmse(reference, candidate),
        reference=reference, candidate=candidate, lambdas=lambdas)


def _window_rmse(reference, candidate, rows) -> dict[str, float]:
    ref_out = output_signals(reference)
    cand_out = output_signals(candidate)
    out = {}
    for name in ref_out:
        d = ref_out[name][rows] - cand_out[name][rows]
        out[name] = float(np.sqrt(np.mean(d ** 2)))
    return out


def fault_study(physical: SimSystem, datadriven: SimSystem, fault: FaultSpec,
                x0_physical, x0_datadriven, dt: float, duration: float,
                scenario: str = "fault") -> ComparisonReport:
    """Run both systems through a fault and report windowed RMSEs.

    Both systems must have been built with the fault already injected into
    their schedules; references are expected to be constant.  Divergence of
    either system is recorded in the report notes rather than raised.
    """
    if not 0.0 <= fault.time <= duration:
        raise GridMismatch("fault time outside the simulation horizon")
    notes = []
    try:
        ref = integrate(physical, x0_physical, dt, duration)
    except NonFinite as exc:
        raise NonFinite(f"physical system diverged: {exc}", exc.time)
    try:
        cand = integrate(datadriven, x0_datadriven, dt, duration)
    except NonFinite as exc:
        notes.append(f"data-driven system diverged at t = {exc.time}")
        report = compare_models(ref, ref, scenario=scenario)
        report.notes = notes
        return report
    report = compare_models(ref, cand, scenario=scenario)
    pre = ref.times < fault.time
    report.windows = {
        "pre_fault": _window_rmse(ref, cand, pre),
        "post_fault": _window_rmse(ref, cand, ~pre),
    }
    report.notes = notes
    return report
