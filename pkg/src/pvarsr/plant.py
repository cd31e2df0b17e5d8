"""Physical models of grid-connected PV plants in the dq frame.

Three right-hand sides are provided:

* ``single_stage_rhs`` -- open-loop single-stage plant (LC filter + grid
  branch + DC link), 7 states.
* ``two_stage_rhs``    -- the same AC side plus an averaged boost converter,
  8 states.
* ``closed_loop_rhs``  -- single-stage plant with the cascaded PI controllers
  folded in; the three integrator outputs become extra states, 10 states.

All functions are pure: they map (state, input, parameters) to a derivative
vector and never mutate their arguments.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .errors import DomainError, SchemaMismatch, SingularState


@dataclass(frozen=True)
class Schema:
    """Named state/input layout of one plant model."""

    name: str
    states: tuple[str, ...]
    inputs: tuple[str, ...]

    @property
    def n(self) -> int:
        return len(self.states)

    @property
    def m(self) -> int:
        return len(self.inputs)

    def state_index(self, name: str) -> int:
        return self.states.index(name)

    def input_index(self, name: str) -> int:
        return self.inputs.index(name)

    def check_state(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise SchemaMismatch(
                f"{self.name}: expected {self.n} states, got shape {x.shape}")
        return x

    def check_input(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.m,):
            raise SchemaMismatch(
                f"{self.name}: expected {self.m} inputs, got shape {u.shape}")
        return u


_AC_STATES = ("i_cd", "i_cq", "i_gd", "i_gq", "v_sd", "v_sq")

SINGLE_STAGE = Schema(
    "single_stage",
    states=_AC_STATES + ("v_dc",),
    inputs=("v_cd", "v_cq", "v_gd", "v_gq", "omega0", "i_PV"),
)
TWO_STAGE = Schema(
    "two_stage",
    states=_AC_STATES + ("v_dc", "i_PV"),
    inputs=("v_cd", "v_cq", "v_gd", "v_gq", "omega0", "v_PV", "d_ref"),
)
CLOSED_LOOP = Schema(
    "closed_loop",
    states=_AC_STATES + ("v_dc", "delta", "epsilon", "eta"),
    inputs=("v_dcref", "i_qref", "v_gd", "v_gq", "i_PV"),
)

SCHEMAS = {s.name: s for s in (SINGLE_STAGE, TWO_STAGE, CLOSED_LOOP)}


@dataclass(frozen=True)
class PlantParameters:
    """Electrical constants and PI gains of one plant configuration.

    ``K_p3``/``K_i3`` drive the reactive-current loop in the closed-loop
    single-stage model and the PV-power loop in the two-stage model; only
    one of the two uses is active for a given plant, so a single pair is
    stored.
    """

    r_c: float   # filter resistance [ohm]
    L_c: float   # filter inductance [H]
    C_f: float   # filter capacitance [F]
    L_g: float   # grid inductance [H]
    r_g: float   # grid resistance [ohm]
    C_dc: float  # DC-link capacitance [F]
    omega0: float  # nominal grid angular frequency [rad/s]
    K_p1: float
    K_i1: float
    K_p2: float
    K_i2: float
    K_p3: float
    K_i3: float
    L_b: float = 0.0  # boost inductance [H]; two-stage only

    def __post_init__(self):
        for name in ("r_c", "L_c", "C_f", "L_g", "r_g", "C_dc"):
            if getattr(self, name) <= 0.0:
                raise DomainError(f"{name} must be strictly positive")
        if self.omega0 <= 0.0:
            raise DomainError("omega0 must be strictly positive")
        if self.L_b < 0.0:
            raise DomainError("L_b must be non-negative")

    def with_(self, **kwargs) -> "PlantParameters":
        return replace(self, **kwargs)


def default_parameters() -> PlantParameters:
    """Stable reference configuration used by the bundled configs."""
    return PlantParameters(
        r_c=4.0, L_c=0.02, C_f=2e-3, L_g=0.03, r_g=0.1, C_dc=0.02,
        omega0=2.0 * np.pi * 60.0,
        K_p1=4.0, K_i1=800.0, K_p2=2.0, K_i2=10.0, K_p3=0.01, K_i3=1.0,
        L_b=0.02,
    )


def ac_matrix(p: PlantParameters) -> np.ndarray:
    """6x6 system matrix of the AC block over [i_cd,i_cq,i_gd,i_gq,v_sd,v_sq]."""
    w0 = p.omega0
    return np.array([
        [-p.r_c / p.L_c, w0, 0.0, 0.0, -1.0 / p.L_c, 0.0],
        [-w0, -p.r_c / p.L_c, 0.0, 0.0, 0.0, -1.0 / p.L_c],
        [1.0 / p.C_f, 0.0, -1.0 / p.C_f, 0.0, 0.0, w0],
        [0.0, 1.0 / p.C_f, 0.0, -1.0 / p.C_f, -w0, 0.0],
        [0.0, 0.0, -p.r_g / p.L_g, w0, 1.0 / p.L_g, 0.0],
        [0.0, 0.0, -w0, -p.r_g / p.L_g, 0.0, 1.0 / p.L_g],
    ])


def _ac_forcing(p: PlantParameters, v_cd, v_cq, v_gd, v_gq) -> np.ndarray:
    return np.array([
        v_cd / p.L_c,
        v_cq / p.L_c,
        -v_gd / p.L_g,
        -v_gq / p.L_g,
        0.0,
        0.0,
    ])


def _check_vdc(v_dc: float):
    if v_dc <= 0.0:
        raise SingularState(f"v_dc = {v_dc} <= 0: cannot divide by DC-link voltage")


def single_stage_rhs(x, u, p: PlantParameters) -> np.ndarray:
    """Derivative of the open-loop single-stage plant.

    The AC block uses the nominal frequency from ``p``; the ``omega0``
    entry of ``u`` is carried for identification purposes only.
    """
    x = SINGLE_STAGE.check_state(x)
    u = SINGLE_STAGE.check_input(u)
    v_dc = x[6]
    _check_vdc(v_dc)
    v_cd, v_cq, v_gd, v_gq, _, i_pv = u
    dx = np.empty(7)
    dx[:6] = ac_matrix(p) @ x[:6] + _ac_forcing(p, v_cd, v_cq, v_gd, v_gq)
    i_gd = x[2]
    dx[6] = i_pv / p.C_dc - 1.5 * v_gd * i_gd / (p.C_dc * v_dc)
    return dx


def two_stage_rhs(x, u, p: PlantParameters) -> np.ndarray:
    """Derivative of the open-loop two-stage plant (boost + VSC).

    The PCC currents in the DC-link power balance are the grid-side
    currents of the AC schema.
    """
    x = TWO_STAGE.check_state(x)
    u = TWO_STAGE.check_input(u)
    v_dc, i_pv = x[6], x[7]
    _check_vdc(v_dc)
    v_cd, v_cq, v_gd, v_gq, _, v_pv, d_ref = u
    if not 0.0 <= d_ref <= 1.0:
        raise DomainError(f"d_ref = {d_ref} outside [0, 1]")
    dx = np.empty(8)
    dx[:6] = ac_matrix(p) @ x[:6] + _ac_forcing(p, v_cd, v_cq, v_gd, v_gq)
    i_gd, i_gq, v_sd, v_sq = x[2], x[3], x[4], x[5]
    dx[6] = ((1.0 - d_ref) * i_pv / p.C_dc
             - 1.5 * (v_sd * i_gd + v_sq * i_gq) / (p.C_dc * v_dc))
    dx[7] = v_pv / p.L_b - (1.0 - d_ref) * v_dc / p.L_b
    return dx


def closed_loop_voltages(x, u, p: PlantParameters) -> tuple[float, float]:
    """Inverter voltages embedded in the closed-loop model.

    ``v_cd`` comes from the DC-link/current cascade, ``v_cq`` from the
    reactive-current loop.
    """
    i_cd, i_cq = x[0], x[1]
    v_sd, v_sq, v_dc = x[4], x[5], x[6]
    delta, epsilon, eta = x[7], x[8], x[9]
    v_dcref, i_qref = u[0], u[1]
    e_d = (v_dcref - v_dc) * p.K_p2 + delta - i_cd
    v_cd = e_d * p.K_p1 + epsilon - p.L_c * p.omega0 * i_cq + v_sd
    v_cq = (i_qref - i_cq) * p.K_p3 + eta + p.L_c * p.omega0 * i_cd + v_sq
    return v_cd, v_cq


def closed_loop_rhs(x, u, p: PlantParameters) -> np.ndarray:
    """Derivative of the closed-loop single-stage model (10 states)."""
    x = CLOSED_LOOP.check_state(x)
    u = CLOSED_LOOP.check_input(u)
    v_dc = x[6]
    _check_vdc(v_dc)
    v_dcref, i_qref, v_gd, v_gq, i_pv = u
    v_cd, v_cq = closed_loop_voltages(x, u, p)
    i_cd, i_cq = x[0], x[1]
    dx = np.empty(10)
    dx[:6] = ac_matrix(p) @ x[:6] + _ac_forcing(p, v_cd, v_cq, v_gd, v_gq)
    i_gd = x[2]
    dx[6] = i_pv / p.C_dc - 1.5 * v_gd * i_gd / (p.C_dc * v_dc)
    delta = x[7]
    dx[7] = (v_dcref - v_dc) * p.K_i2
    dx[8] = ((v_dcref - v_dc) * p.K_p2 + delta - i_cd) * p.K_i1
    dx[9] = (i_qref - i_cq) * p.K_i3
    return dx


RHS = {
    "single_stage": single_stage_rhs,
    "two_stage": two_stage_rhs,
    "closed_loop": closed_loop_rhs,
}


@dataclass(frozen=True)
class ControllerIntegrators:
    """Integrator states of the cascaded PI structure.

    ``delta`` belongs to the DC-link loop, ``gamma_d``/``gamma_q`` to the
    d/q current loops.
    """

    delta: float = 0.0
    gamma_d: float = 0.0
    gamma_q: float = 0.0


class ControllerOutput(NamedTuple):
    v_cd: float
    v_cq: float
    i_dref: float
    i_qref: float
    integrators: ControllerIntegrators


def controller_outputs(x, refs, p: PlantParameters,
                       integ: ControllerIntegrators,
                       dt: float) -> ControllerOutput:
    """One continuous-time evaluation of the cascaded PI controllers.

    ``refs`` is a mapping that may contain ``v_dcref`` (DC-link mode for
    the d axis) or ``P_ref`` (power mode), and ``i_qref`` or ``Q_ref``.
    Integrator states are advanced by ``dt`` using the current errors;
    outputs use the pre-update integrator values so that the call is the
    algebraic part of a pure ODE.
    """
    x = SINGLE_STAGE.check_state(x)
    i_cd, i_cq = x[0], x[1]
    v_sd, v_sq, v_dc = x[4], x[5], x[6]

    if "v_dcref" in refs:
        err_dc = refs["v_dcref"] - v_dc
        i_dref = p.K_p2 * err_dc + integ.delta
        d_delta = p.K_i2 * err_dc
    elif "P_ref" in refs:
        if v_sd == 0.0:
            raise ZeroDivisionError("P_ref -> i_dref requires v_sd != 0")
        i_dref = 2.0 * refs["P_ref"] / (3.0 * v_sd)
        d_delta = 0.0
    else:
        raise KeyError("refs must provide v_dcref or P_ref")

    if "i_qref" in refs:
        i_qref = refs["i_qref"]
    elif "Q_ref" in refs:
        if v_sq == 0.0:
            raise ZeroDivisionError("Q_ref -> i_qref requires v_sq != 0")
        i_qref = -2.0 * refs["Q_ref"] / (3.0 * v_sq)
    else:
        raise KeyError("refs must provide i_qref or Q_ref")

    e_d = i_dref - i_cd
    e_q = i_qref - i_cq
    v_cd = p.K_p1 * e_d + integ.gamma_d - p.omega0 * p.L_c * i_cq + v_sd
    v_cq = p.K_p1 * e_q + integ.gamma_q + p.omega0 * p.L_c * i_cd + v_sq

    new_integ = ControllerIntegrators(
        delta=integ.delta + dt * d_delta,
        gamma_d=integ.gamma_d + dt * p.K_i1 * e_d,
        gamma_q=integ.gamma_q + dt * p.K_i1 * e_q,
    )
    return ControllerOutput(v_cd, v_cq, i_dref, i_qref, new_integ)
