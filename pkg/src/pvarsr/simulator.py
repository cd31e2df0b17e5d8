"""Fixed-step simulation of the PV plant models.

The integrator is classical RK4 over an augmented state: plant states plus
any controller integrator states required to generate the plant inputs.
The logged trajectory contains only the plant states, the plant inputs and
the state derivatives, organized exactly as the three data matrices used
by the regression stage.
"""
from __future__ import annotations

import bisect
import io
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import plant
from .errors import DomainError, GridMismatch, NonFinite, SchemaMismatch, TooShort
from .plant import PlantParameters, Schema, SCHEMAS

_SWITCH_EPS = 1e-9  # tolerance when matching switch times against stage times


class PiecewiseConstant:
    """Right-continuous piecewise-constant signal defined by (time, value) pairs."""

    def __init__(self, pairs):
        pairs = sorted(pairs)
        self.times = [t for t, _ in pairs]
        self.values = [v for _, v in pairs]
        if not self.times:
            raise DomainError("empty signal definition")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise DomainError("switch times must be strictly increasing")

    def __call__(self, t: float) -> float:
        i = bisect.bisect_right(self.times, t + _SWITCH_EPS) - 1
        return self.values[max(i, 0)]


class ReferenceSchedule:
    """Named piecewise-constant reference/exogenous signals.

    Typical keys: v_dcref, Q_ref, P_ref, P_PVref, i_qref, v_gd, v_gq,
    i_PV, v_PV.  Switch times must start at the simulation start.
    """

    def __init__(self, signals: dict[str, list[tuple[float, float]]]):
        self.signals = {k: PiecewiseConstant(v) for k, v in signals.items()}

    def __contains__(self, name):
        return name in self.signals

    def value(self, name: str, t: float) -> float:
        return self.signals[name](t)

    def sample(self, t: float) -> dict[str, float]:
        return {k: sig(t) for k, sig in self.signals.items()}

    def with_fault(self, fault: Optional["FaultSpec"]) -> "ReferenceSchedule":
        if fault is None:
            return self
        out = ReferenceSchedule({})
        out.signals = dict(self.signals)
        out.signals[fault.signal] = PiecewiseConstant(
            [(0.0, fault.pre_value), (fault.time, fault.fault_value)])
        return out


def random_steps(duration, period, low, high, seed, start=0.0):
    """Seeded multi-level step profile; useful as persistent excitation."""
    rng = np.random.default_rng(seed)
    times = np.arange(start, duration, period)
    return [(float(t), float(rng.uniform(low, high))) for t in times]


@dataclass(frozen=True)
class FaultSpec:
    """Step change of one exogenous signal at a given time."""

    signal: str
    pre_value: float
    fault_value: float
    time: float


@dataclass
class Trajectory:
    """Sampled states X, inputs U and derivatives Xdot on a uniform grid."""

    schema: Schema
    dt: float
    X: np.ndarray
    U: np.ndarray
    Xdot: np.ndarray

    def __post_init__(self):
        N = self.X.shape[0]
        if self.U.shape[0] != N or self.Xdot.shape[0] != N:
            raise GridMismatch("X, U, Xdot row counts differ")
        if self.X.shape[1] != self.schema.n or self.U.shape[1] != self.schema.m:
            raise SchemaMismatch("column counts do not match schema")

    def __len__(self):
        return self.X.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.dt

    @property
    def duration(self) -> float:
        return (len(self) - 1) * self.dt

    def column(self, name: str) -> np.ndarray:
        """State or input column by signal name."""
        if name in self.schema.states:
            return self.X[:, self.schema.state_index(name)]
        if name in self.schema.inputs:
            return self.U[:, self.schema.input_index(name)]
        raise KeyError(name)

    def to_csv(self, path):
        header = ",".join(
            ["t", *self.schema.states, *self.schema.inputs,
             *("d_" + s for s in self.schema.states)])
        data = np.column_stack([self.times, self.X, self.U, self.Xdot])
        np.savetxt(path, data, delimiter=",", header=header, comments="",
                   fmt="%.17g")

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        if isinstance(path, io.IOBase):
            names = path.readline().strip().split(",")
            data = np.loadtxt(path, delimiter=",", ndmin=2)
        else:
            with open(path) as fh:
                names = fh.readline().strip().split(",")
                data = np.loadtxt(fh, delimiter=",", ndmin=2)
        schema = _schema_from_header(names)
        n, m = schema.n, schema.m
        times = data[:, 0]
        dt = float(times[1] - times[0]) if len(times) > 1 else 1.0
        return cls(schema=schema, dt=dt,
                   X=data[:, 1:1 + n],
                   U=data[:, 1 + n:1 + n + m],
                   Xdot=data[:, 1 + n + m:1 + 2 * n + m])


def _schema_from_header(names) -> Schema:
    for schema in SCHEMAS.values():
        expected = ["t", *schema.states, *schema.inputs,
                    *("d_" + s for s in schema.states)]
        if names == expected:
            return schema
    raise SchemaMismatch(f"CSV header matches no known schema: {names[:5]}...")


# ---------------------------------------------------------------------------
# RK4 core

def rk4_step(f, t, z, dt):
    k1 = f(t, z)
    k2 = f(t + 0.5 * dt, z + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, z + 0.5 * dt * k2)
    k4 = f(t + dt, z + dt * k3)
    return z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_solve(f, z0, dt, n_steps):
    """Integrate z' = f(t, z); returns array of shape (n_steps + 1, len(z0))."""
    z = np.asarray(z0, dtype=float)
    out = np.empty((n_steps + 1, z.size))
    out[0] = z
    t = 0.0
    for k in range(n_steps):
        z = rk4_step(f, k * dt, z, dt)
        out[k + 1] = z
    return out


# ---------------------------------------------------------------------------
# Simulatable systems (plant + input policy + controller integrators)

class SimSystem:
    """Augmented ODE: plant states plus controller integrator states.

    Subclasses define the input policy; ``integrate`` handles stepping,
    logging and derivative assembly.
    """

    schema: Schema
    n_aux: int = 0

    def aux0(self) -> np.ndarray:
        return np.zeros(self.n_aux)

    def inputs(self, t: float, x: np.ndarray, aux: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def plant_rhs(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def aux_rhs(self, t, x, aux, u) -> np.ndarray:
        return np.zeros(0)

    def full_rhs(self, t, z):
        x, aux = z[:self.schema.n], z[self.schema.n:]
        u = self.inputs(t, x, aux)
        return np.concatenate([self.plant_rhs(x, u), self.aux_rhs(t, x, aux, u)])


class ScheduledInputSystem(SimSystem):
    """Open-loop plant whose inputs are all read from a schedule.

    Signals named after the input columns drive the plant directly;
    ``omega0`` defaults to the configured nominal frequency.
    """

    def __init__(self, schema_name, params: PlantParameters,
                 refs: ReferenceSchedule, fault: Optional[FaultSpec] = None):
        self.schema = SCHEMAS[schema_name]
        self.params = params
        self.refs = refs.with_fault(fault)
        self._rhs = plant.RHS[schema_name]

    def inputs(self, t, x, aux):
        u = np.empty(self.schema.m)
        for j, name in enumerate(self.schema.inputs):
            if name in self.refs:
                u[j] = self.refs.value(name, t)
            elif name == "omega0":
                u[j] = self.params.omega0
            else:
                raise KeyError(f"no schedule entry for input '{name}'")
        return u

    def plant_rhs(self, x, u):
        return self._rhs(x, u, self.params)


class _CascadedController:
    """Shared cascaded PI input policy for single- and two-stage plants.

    The d-axis reference comes from the DC-link loop (or directly from a
    scheduled P_ref); the q-axis reference is taken from the schedule or
    derived from Q_ref against the measured d-axis PCC voltage, matching
    the reactive-power output convention used in the evaluation reports.
    """

    def __init__(self, refs: ReferenceSchedule, omega0, L_dec,
                 kp_d, ki_d, kp_q, ki_q, K_p2, K_i2):
        self.refs = refs
        self.omega0 = omega0
        self.L_dec = L_dec
        self.kp_d, self.ki_d = kp_d, ki_d
        self.kp_q, self.ki_q = kp_q, ki_q
        self.K_p2, self.K_i2 = K_p2, K_i2

    # aux layout: [delta_dc, gamma_d, gamma_q]
    n_aux = 3

    def current_refs(self, t, x):
        v_dc = x[6]
        if "v_dcref" in self.refs:
            i_dref = self.K_p2 * (self.refs.value("v_dcref", t) - v_dc)
            i_dref_int = True
        else:
            v_sd = x[4]
            i_dref = 2.0 * self.refs.value("P_ref", t) / (3.0 * v_sd)
            i_dref_int = False
        if "i_qref" in self.refs:
            i_qref = self.refs.value("i_qref", t)
        else:
            v_sd = x[4]
            i_qref = -2.0 * self.refs.value("Q_ref", t) / (3.0 * v_sd)
        return i_dref, i_dref_int, i_qref

    def voltages(self, t, x, aux):
        i_cd, i_cq, v_sd, v_sq = x[0], x[1], x[4], x[5]
        i_dref, with_int, i_qref = self.current_refs(t, x)
        if with_int:
            i_dref = i_dref + aux[0]
        e_d = i_dref - i_cd
        e_q = i_qref - i_cq
        v_cd = self.kp_d * e_d + aux[1] - self.omega0 * self.L_dec * i_cq + v_sd
        v_cq = self.kp_q * e_q + aux[2] + self.omega0 * self.L_dec * i_cd + v_sq
        return v_cd, v_cq, e_d, e_q

    def aux_rhs(self, t, x, aux):
        v_dc = x[6]
        _, _, e_d, e_q = self.voltages(t, x, aux)
        d_delta = 0.0
        if "v_dcref" in self.refs:
            d_delta = self.K_i2 * (self.refs.value("v_dcref", t) - v_dc)
        return np.array([d_delta, self.ki_d * e_d, self.ki_q * e_q])


class SingleStagePhysical(SimSystem):
    """Single-stage plant driven by its own cascaded PI controllers."""

    n_aux = 3

    def __init__(self, params: PlantParameters, refs: ReferenceSchedule,
                 fault: Optional[FaultSpec] = None):
        self.schema = plant.SINGLE_STAGE
        self.params = params
        self.refs = refs.with_fault(fault)
        p = params
        self.ctrl = _CascadedController(
            self.refs, p.omega0, p.L_c,
            p.K_p1, p.K_i1, p.K_p1, p.K_i1, p.K_p2, p.K_i2)

    def inputs(self, t, x, aux):
        v_cd, v_cq, _, _ = self.ctrl.voltages(t, x, aux)
        return np.array([
            v_cd, v_cq,
            self.refs.value("v_gd", t), self.refs.value("v_gq", t),
            self.params.omega0, self.refs.value("i_PV", t)])

    def plant_rhs(self, x, u):
        return plant.single_stage_rhs(x, u, self.params)

    def aux_rhs(self, t, x, aux, u):
        return self.ctrl.aux_rhs(t, x, aux)


class TwoStagePhysical(SimSystem):
    """Two-stage plant with current, DC-link and PV-power PI loops."""

    n_aux = 4  # [delta_dc, gamma_d, gamma_q, zeta_pv]

    def __init__(self, params: PlantParameters, refs: ReferenceSchedule,
                 fault: Optional[FaultSpec] = None):
        self.schema = plant.TWO_STAGE
        self.params = params
        self.refs = refs.with_fault(fault)
        p = params
        if p.L_b <= 0.0:
            raise DomainError("two-stage plant requires L_b > 0")
        self.ctrl = _CascadedController(
            self.refs, p.omega0, p.L_c,
            p.K_p1, p.K_i1, p.K_p1, p.K_i1, p.K_p2, p.K_i2)

    def _pv_error(self, t, x):
        v_pv = self.refs.value("v_PV", t)
        i_pvref = self.refs.value("P_PVref", t) / v_pv
        return i_pvref - x[7]

    def inputs(self, t, x, aux):
        p = self.params
        v_cd, v_cq, _, _ = self.ctrl.voltages(t, x, aux[:3])
        d_ref = p.K_p3 * self._pv_error(t, x) + aux[3]
        d_ref = min(max(d_ref, 0.0), 1.0)
        return np.array([
            v_cd, v_cq,
            self.refs.value("v_gd", t), self.refs.value("v_gq", t),
            p.omega0, self.refs.value("v_PV", t), d_ref])

    def plant_rhs(self, x, u):
        return plant.two_stage_rhs(x, u, self.params)

    def aux_rhs(self, t, x, aux, u):
        return np.concatenate([
            self.ctrl.aux_rhs(t, x, aux[:3]),
            [self.params.K_i3 * self._pv_error(t, x)]])


class ClosedLoopPhysical(SimSystem):
    """Closed-loop single-stage model; all inputs come from the schedule."""

    n_aux = 0

    def __init__(self, params: PlantParameters, refs: ReferenceSchedule,
                 fault: Optional[FaultSpec] = None):
        self.schema = plant.CLOSED_LOOP
        self.params = params
        self.refs = refs.with_fault(fault)

    def inputs(self, t, x, aux):
        return np.array([self.refs.value(name, t)
                         for name in self.schema.inputs])

    def plant_rhs(self, x, u):
        return plant.closed_loop_rhs(x, u, self.params)


def build_system(model: str, params: PlantParameters, refs: ReferenceSchedule,
                 fault: Optional[FaultSpec] = None,
                 drive: str = "physical") -> SimSystem:
    """System for one of the three plant models.

    ``drive`` selects who supplies the converter commands: ``physical``
    wraps the plant in its cascaded PI loops, ``scheduled`` reads every
    input (open loop) from the reference schedule.
    """
    if drive == "scheduled":
        return ScheduledInputSystem(model, params, refs, fault)
    if drive != "physical":
        raise DomainError(f"unknown drive mode: {drive!r}")
    builders = {
        "single_stage": SingleStagePhysical,
        "two_stage": TwoStagePhysical,
        "closed_loop": ClosedLoopPhysical,
    }
    return builders[model](params, refs, fault)


# ---------------------------------------------------------------------------
# Integration and data-matrix assembly

_FINITE_LIMIT = 1e12


def integrate(system: SimSystem, x0, dt: float, duration: float,
              deriv_mode: str = "exact") -> Trajectory:
    """Fixed-step RK4 run of ``system`` from plant state ``x0``.

    ``deriv_mode`` selects how the logged derivative matrix is filled:
    ``exact`` evaluates the right-hand side at each sample ("measured"
    derivatives); ``numeric`` applies second-order finite differences to
    the sampled states.
    """
    if dt <= 0.0:
        raise DomainError("dt must be positive")
    if duration < dt:
        raise DomainError("duration must be at least dt")
    schema = system.schema
    x0 = schema.check_state(x0)
    n_steps = int(round(duration / dt))
    N = n_steps + 1
    X = np.empty((N, schema.n))
    U = np.empty((N, schema.m))
    z = np.concatenate([x0, system.aux0()])
    for k in range(N):
        t = k * dt
        x, aux = z[:schema.n], z[schema.n:]
        if not np.all(np.abs(z) < _FINITE_LIMIT):
            raise NonFinite(f"state left finite range at t = {t:.6g}", time=t)
        X[k] = x
        U[k] = system.inputs(t, x, aux)
        if k < n_steps:
            z = rk4_step(system.full_rhs, t, z, dt)
    if deriv_mode == "exact":
        Xdot = np.empty_like(X)
        for k in range(N):
            Xdot[k] = system.plant_rhs(X[k], U[k])
    elif deriv_mode == "numeric":
        Xdot = numeric_derivatives(X, dt)
    else:
        raise DomainError(f"unknown derivative mode '{deriv_mode}'")
    return Trajectory(schema=schema, dt=dt, X=X, U=U, Xdot=Xdot)


def simulate(model: str, params: PlantParameters, x0, refs: ReferenceSchedule,
             fault: Optional[FaultSpec] = None, dt: float = 1e-4,
             duration: float = 5.0, deriv_mode: str = "exact",
             drive: str = "physical") -> Trajectory:
    """Convenience wrapper: build the system and integrate it."""
    return integrate(build_system(model, params, refs, fault, drive=drive),
                     x0, dt, duration, deriv_mode)


def numeric_derivatives(X: np.ndarray, dt: float) -> np.ndarray:
    """Second-order finite differences: central interior, one-sided ends."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    N = X.shape[0]
    if N < 3:
        raise TooShort("numeric differentiation needs at least 3 samples")
    D = np.empty_like(X)
    D[1:-1] = (X[2:] - X[:-2]) / (2.0 * dt)
    D[0] = (-3.0 * X[0] + 4.0 * X[1] - X[2]) / (2.0 * dt)
    D[-1] = (3.0 * X[-1] - 4.0 * X[-2] + X[-3]) / (2.0 * dt)
    return D


def split_train_test(traj: Trajectory, ratio: float) -> tuple[Trajectory, Trajectory]:
    """Contiguous time split; the train part gets floor(N * ratio) rows."""
    if not 0.0 < ratio < 1.0:
        raise DomainError("ratio must lie strictly between 0 and 1")
    N = len(traj)
    n_train = int(np.floor(N * ratio))
    if n_train < 1 or n_train >= N:
        raise TooShort("split leaves an empty part")
    mk = lambda sl: Trajectory(schema=traj.schema, dt=traj.dt,
                               X=traj.X[sl], U=traj.U[sl], Xdot=traj.Xdot[sl])
    return mk(slice(0, n_train)), mk(slice(n_train, N))
