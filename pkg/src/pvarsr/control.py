"""Controller synthesis from identified dynamics and data-driven closed loops.

The current loop is designed by pole-zero cancellation: with plant
parameters recovered from the identified coefficients, the PI zero cancels
the plant pole and the closed loop collapses to a first-order lag with the
configured time constant.  Outer loops (DC-link, reactive power, PV power)
mirror the physical configuration.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, MissingGain, MissingTerm, SchemaMismatch
from .features import TermEvaluator
from .plant import PlantParameters
from .regression import SparseModel
from .simulator import (FaultSpec, ReferenceSchedule, SimSystem,
                        _CascadedController, rk4_solve)


@dataclass(frozen=True)
class ControllerGains:
    """PI gains produced by the pole-cancellation design."""

    k_p: float
    k_i: float
    tau_i: float

    @property
    def L_hat(self) -> float:
        return self.k_p * self.tau_i

    @property
    def r_hat(self) -> float:
        return self.k_i * self.tau_i


def extract_plant_params(model: SparseModel) -> tuple[float, float]:
    """Recover (L_hat, r_hat) from the identified i_cd equation.

    Inverts the structure of the AC dynamics: the v_cd coefficient is
    1/L and the i_cd coefficient is -r/L.
    """
    if "i_cd" not in model.schema.states or "v_cd" not in model.schema.inputs:
        raise SchemaMismatch("model schema has no converter-current equation")
    c_vcd = model.coefficient("i_cd", "v_cd")
    c_icd = model.coefficient("i_cd", "i_cd")
    if c_vcd == 0.0 or c_icd == 0.0:
        raise MissingTerm(
            "v_cd or i_cd coefficient missing from the i_cd equation "
            f"(v_cd: {c_vcd}, i_cd: {c_icd})")
    L_hat = 1.0 / float(c_vcd)
    r_hat = -float(c_icd) * L_hat
    return L_hat, r_hat


def design_current_controller(L_hat: float, r_hat: float,
                              tau_i: float) -> ControllerGains:
    """k_p = L/tau, k_i = r/tau; the PI zero cancels the plant pole."""
    if tau_i <= 0.0:
        raise DomainError("tau_i must be positive")
    if L_hat <= 0.0:
        raise DomainError("L_hat must be positive")
    return ControllerGains(k_p=L_hat / tau_i, k_i=r_hat / tau_i, tau_i=tau_i)


def closed_loop_step_response(gains: ControllerGains, L_hat: float,
                              r_hat: float, dt: float,
                              duration: float) -> tuple[np.ndarray, np.ndarray]:
    """Unit reference step into the PI + first-order plant loop.

    Returns (times, output); by construction the output follows
    1 - exp(-t / tau_i).
    """
    def rhs(t, z):
        i, integ = z
        e = 1.0 - i
        v = gains.k_p * e + integ
        return np.array([(v - r_hat * i) / L_hat, gains.k_i * e])

    n_steps = int(round(duration / dt))
    out = rk4_solve(rhs, np.zeros(2), dt, n_steps)
    return np.arange(n_steps + 1) * dt, out[:, 0]


class DataDrivenSystem(SimSystem):
    """Identified plant plus mirrored outer loops and designed current loops.

    Usable anywhere a physical system is (integration, fault studies).
    """

    def __init__(self, model: SparseModel, gains: dict[str, ControllerGains],
                 params: PlantParameters, refs: ReferenceSchedule,
                 fault: Optional[FaultSpec] = None):
        if model.schema.name not in ("single_stage", "two_stage"):
            raise SchemaMismatch(
                f"cannot assemble controllers around schema '{model.schema.name}'")
        for loop in ("current_d", "current_q"):
            if loop not in gains:
                raise MissingGain(f"no gains supplied for the {loop} loop")
        self.schema = model.schema
        self.model = model
        self.params = params
        self.refs = refs.with_fault(fault)
        self.evaluator = TermEvaluator(model.descriptors, model.schema)
        gd, gq = gains["current_d"], gains["current_q"]
        self.ctrl = _CascadedController(
            self.refs, params.omega0, gd.L_hat,
            gd.k_p, gd.k_i, gq.k_p, gq.k_i, params.K_p2, params.K_i2)
        self.n_aux = 3 if self.schema.name == "single_stage" else 4

    def _pv_error(self, t, x):
        v_pv = self.refs.value("v_PV", t)
        return self.refs.value("P_PVref", t) / v_pv - x[7]

    def inputs(self, t, x, aux):
        p = self.params
        v_cd, v_cq, _, _ = self.ctrl.voltages(t, x, aux[:3])
        if self.schema.name == "single_stage":
            return np.array([
                v_cd, v_cq,
                self.refs.value("v_gd", t), self.refs.value("v_gq", t),
                p.omega0, self.refs.value("i_PV", t)])
        d_ref = p.K_p3 * self._pv_error(t, x) + aux[3]
        d_ref = min(max(d_ref, 0.0), 1.0)
        return np.array([
            v_cd, v_cq,
            self.refs.value("v_gd", t), self.refs.value("v_gq", t),
            p.omega0, self.refs.value("v_PV", t), d_ref])

    def plant_rhs(self, x, u):
        return self.evaluator.row(x, u) @ self.model.xi

    def aux_rhs(self, t, x, aux, u):
        base = self.ctrl.aux_rhs(t, x, aux[:3])
        if self.schema.name == "single_stage":
            return base
        return np.concatenate([base, [self.params.K_i3 * self._pv_error(t, x)]])


def assemble_data_driven_system(model: SparseModel,
                                gains: dict[str, ControllerGains],
                                params: PlantParameters,
                                refs: ReferenceSchedule,
                                fault: Optional[FaultSpec] = None) -> DataDrivenSystem:
    """Closed data-driven loop ready for ``simulator.integrate``."""
    return DataDrivenSystem(model, gains, params, refs, fault)


def design_from_model(model: SparseModel, tau_i: float) -> dict[str, ControllerGains]:
    """Extract plant parameters and design identical d/q current loops."""
    L_hat, r_hat = extract_plant_params(model)
    g = design_current_controller(L_hat, r_hat, tau_i)
    return {"current_d": g, "current_q": g}
