"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

Expensive simulation/identification products are shared through
module-scoped fixtures; every criterion prints a single summary line.
"""
import math
import time
import warnings

import numpy as np
import pytest

from conftest import true_single_stage_model, true_two_stage_model
from pvarsr.arsr import (ArsrConfig, adaptive_sindy, per_state_rmse,
                         scalar_lambda_sweep)
from pvarsr.control import (assemble_data_driven_system,
                            closed_loop_step_response, design_from_model)
from pvarsr.evaluation import fault_study, output_rmse, output_signals
from pvarsr.features import LibrarySpec, build_library
from pvarsr.plant import default_parameters
from pvarsr.regression import least_squares, simulate_identified, stlsq
from pvarsr.simulator import (FaultSpec, ReferenceSchedule, Trajectory,
                              build_system, integrate, numeric_derivatives,
                              random_steps, rk4_solve, simulate,
                              split_train_test)

warnings.simplefilter("ignore")

SWEEP_GRID = [1.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0]


def _report(num, name, checks):
    """checks: list of (description, bool). Prints one PASS/FAIL line."""
    failed = [d for d, ok in checks if not ok]
    status = "PASS" if not failed else "FAIL"
    print(f"\n[CRITERION {num}] {status} - {name}")
    assert not failed, f"criterion {num} failed: {failed}"


def _active_match(model, truth, states, rel_tol):
    """Compare active sets and coefficients against {state: {term: coef}}."""
    problems = []
    for state in states:
        k = model.schema.state_index(state)
        got = model.active_terms(k)
        want = truth[state]
        if set(got) != set(want):
            problems.append(f"{state}: extra {sorted(set(got) - set(want))} "
                            f"missing {sorted(set(want) - set(got))}")
            continue
        for term, coef in want.items():
            rel = abs(got[term] - coef) / abs(coef)
            if rel > rel_tol:
                problems.append(f"{state}.{term}: rel err {rel:.2e}")
    return problems


def _truth_rows(model):
    return {state: model.active_terms(k)
            for k, state in enumerate(model.schema.states)}


# ---------------------------------------------------------------- fixtures

@pytest.fixture(scope="module")
def params():
    return default_parameters()


@pytest.fixture(scope="module")
def single_stage_run(params):
    """5 s open-loop single-stage excitation plus a lambda=1 STLSQ fit."""
    t0 = time.time()
    refs = ReferenceSchedule({
        "v_cd": random_steps(5.0, 0.05, -20.0, 20.0, seed=11),
        "v_cq": random_steps(5.0, 0.05, -20.0, 20.0, seed=12),
        "v_gd": random_steps(5.0, 0.05, 760.0, 840.0, seed=13),
        "v_gq": random_steps(5.0, 0.05, -40.0, 40.0, seed=14),
        "i_PV": random_steps(5.0, 0.05, 7.0, 13.0, seed=15),
    })
    x0 = np.array([-9.214, -6.123, 8.300, 0.897, -9.310, 93.965, 1000.0])
    traj = simulate("single_stage", params, x0, refs, dt=1e-4, duration=5.0,
                    drive="scheduled")
    lib = build_library(traj, LibrarySpec())
    model = stlsq(lib.theta, traj.Xdot, np.ones(7),
                  descriptors=lib.descriptors, schema=traj.schema)
    return {"traj": traj, "lib": lib, "model": model,
            "elapsed": time.time() - t0}


@pytest.fixture(scope="module")
def two_stage_run(params):
    """2 s open-loop two-stage excitation, exact and numeric derivatives."""
    t0 = time.time()
    refs = ReferenceSchedule({
        "v_cd": random_steps(2.0, 0.05, -20.0, 20.0, seed=21),
        "v_cq": random_steps(2.0, 0.05, -20.0, 20.0, seed=22),
        "v_gd": random_steps(2.0, 0.05, 760.0, 840.0, seed=23),
        "v_gq": random_steps(2.0, 0.05, -40.0, 40.0, seed=24),
        "v_PV": random_steps(2.0, 0.05, 396.0, 404.0, seed=25),
        "d_ref": random_steps(2.0, 0.02, 0.597, 0.603, seed=26),
    })
    x0 = np.array([-9.214, -6.123, 8.300, 0.897, -9.310, 93.965,
                   1000.0, 0.0])
    exact = simulate("two_stage", params, x0, refs, dt=1e-4, duration=2.0,
                     drive="scheduled")
    numeric = Trajectory(schema=exact.schema, dt=exact.dt, X=exact.X,
                         U=exact.U, Xdot=numeric_derivatives(exact.X,
                                                             exact.dt))
    return {"exact": exact, "numeric": numeric, "elapsed": time.time() - t0}


@pytest.fixture(scope="module")
def two_stage_arsr(two_stage_run):
    """Adaptive run and scalar sweep on the numeric-derivative data."""
    train, test = split_train_test(two_stage_run["numeric"], 0.9)
    outputs = list(output_signals(two_stage_run["numeric"]))
    rows = scalar_lambda_sweep(train, test, LibrarySpec(), SWEEP_GRID,
                               outputs=outputs)
    cfg = ArsrConfig(lambda_init=10.0, lambda_max=40.0, steps=2.0)
    report = adaptive_sindy(train, test, LibrarySpec(), cfg)
    sim = simulate_identified(report.model, test.X[0], test, test.dt,
                              test.duration)
    arsr_outputs = output_rmse(test, sim, outputs)
    return {"report": report, "rows": rows, "outputs": outputs,
            "arsr_outputs": arsr_outputs, "test": test}


@pytest.fixture(scope="module")
def closed_loop_arsr(params):
    """Closed-loop run with the full integrator-gain scale disparity."""
    p = params.with_(K_p1=4.0, K_i1=500.0, K_p2=2.0, K_i2=0.01,
                     K_p3=4.0, K_i3=500.0)
    refs = ReferenceSchedule({
        "v_dcref": random_steps(2.0, 0.05, 990.0, 1010.0, seed=81),
        "i_qref": random_steps(2.0, 0.05, -2.0, 2.0, seed=82),
        "v_gd": random_steps(2.0, 0.05, 780.0, 820.0, seed=83),
        "v_gq": random_steps(2.0, 0.05, -20.0, 20.0, seed=84),
        "i_PV": random_steps(2.0, 0.05, 8.0, 12.0, seed=85),
    })
    x0 = np.zeros(10)
    x0[6] = 1000.0
    traj = simulate("closed_loop", p, x0, refs, dt=2e-4, duration=3.0,
                    deriv_mode="exact")
    train, test = split_train_test(traj, 0.667)
    init = np.array([1, 1, 1, 1, 1, 1, 1, 0.005, 19, 19], float)
    cfg = ArsrConfig(lambda_init=init, lambda_max=19.0, steps=6.0)
    report = adaptive_sindy(train, test, LibrarySpec(), cfg)
    rows = scalar_lambda_sweep(train, test, LibrarySpec(), SWEEP_GRID)
    return {"params": p, "report": report, "rows": rows}


@pytest.fixture(scope="module")
def designed_gains(single_stage_run):
    return design_from_model(single_stage_run["model"], tau_i=0.005)


# --------------------------------------------------------------- criteria

def test_criterion_1_exact_recovery_linear_block(single_stage_run, params):
    truth = _truth_rows(true_single_stage_model(params))
    problems = _active_match(single_stage_run["model"], truth,
                             single_stage_run["model"].schema.states, 1e-6)
    _report(1, "exact recovery of the linear AC block", [
        ("active sets and coefficients within 1e-6", not problems),
        (f"runtime < 60 s (took {single_stage_run['elapsed']:.1f} s)",
         single_stage_run["elapsed"] < 60.0),
    ])


def test_criterion_2_rational_two_stage_recovery(two_stage_run, params):
    t0 = time.time()
    traj = two_stage_run["exact"]
    lib = build_library(traj, LibrarySpec())
    model = stlsq(lib.theta, traj.Xdot, np.ones(8),
                  descriptors=lib.descriptors, schema=traj.schema)
    truth = _truth_rows(true_two_stage_model(params))
    problems = _active_match(model, truth, ("v_dc", "i_PV"), 1e-4)
    elapsed = time.time() - t0 + two_stage_run["elapsed"]
    _report(2, "rational and boost-stage term recovery", [
        ("v_dc and i_PV equations recovered within 1e-4", not problems),
        (f"runtime < 120 s (took {elapsed:.1f} s)", elapsed < 120.0),
    ])


def test_criterion_3_arsr_dominance(two_stage_arsr):
    arsr = two_stage_arsr["arsr_outputs"]
    best = {o: min(r["outputs"][o] for r in two_stage_arsr["rows"])
            for o in two_stage_arsr["outputs"]}
    _report(3, "adaptive thresholds dominate the scalar sweep", [
        ("per-output RMSE <= best scalar for every output",
         all(arsr[o] <= best[o] for o in arsr)),
        ("strictly better for at least one output",
         any(arsr[o] < best[o] for o in arsr)),
    ])


def test_criterion_4_arsr_mechanics(two_stage_arsr, single_stage_run):
    report = two_stage_arsr["report"]
    n = report.model.schema.n
    by_iter = {}
    for h in report.history:
        by_iter.setdefault(h["iteration"], []).append(h["rmse"])
    monotone = all(min(v) <= v[0] for v in by_iter.values())

    # Determinism on a decimated single-stage dataset: rerun twice.
    src = single_stage_run["traj"]
    small = Trajectory(schema=src.schema, dt=src.dt * 10, X=src.X[::10],
                       U=src.U[::10], Xdot=src.Xdot[::10])
    train, test = split_train_test(small, 0.8)
    cfg = ArsrConfig(lambda_init=1.0, lambda_max=4.0, steps=1.0)
    a = adaptive_sindy(train, test, LibrarySpec(), cfg)
    b = adaptive_sindy(train, test, LibrarySpec(), cfg)
    _report(4, "adaptive sweep mechanics", [
        ("lock-in never increases the swept state's RMSE", monotone),
        ("exactly n lock-ins", len(report.optimized_order) == n),
        ("optimized order is a duplicate-free permutation",
         sorted(report.optimized_order) == list(range(n))),
        ("reruns are bit-identical",
         np.array_equal(a.model.xi, b.model.xi)
         and np.array_equal(a.lambdas, b.lambdas)
         and a.history == b.history),
    ])


def test_criterion_5_stlsq_invariants(single_stage_run):
    theta = single_stage_run["lib"].theta[:20001]
    xdot = single_stage_run["traj"].Xdot[:20001]
    descs = single_stage_run["lib"].descriptors
    schema = single_stage_run["traj"].schema

    zero = stlsq(theta, xdot, np.zeros(7), descriptors=descs, schema=schema)
    resid_ok = True
    for k in range(7):
        dense = least_squares(theta, xdot[:, k], warn=False).coef
        r_stlsq = np.linalg.norm(xdot[:, k] - theta @ zero.xi[:, k])
        r_dense = np.linalg.norm(xdot[:, k] - theta @ dense)
        resid_ok &= abs(r_stlsq - r_dense) <= 1e-10

    sizes = []
    models = {}
    for lam in [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0]:
        m = stlsq(theta, xdot, np.full(7, lam), descriptors=descs,
                  schema=schema)
        models[lam] = m
        sizes.append(int(np.count_nonzero(m.xi)))
    monotone = all(a >= b for a, b in zip(sizes, sizes[1:]))

    base = stlsq(theta, xdot, np.ones(7), descriptors=descs, schema=schema)
    again = stlsq(theta, xdot, np.ones(7), descriptors=descs, schema=schema,
                  init=base.xi)
    fixpoint = np.array_equal(base.xi, again.xi)

    contract = True
    for lam, m in models.items():
        nz = m.xi[m.xi != 0.0]
        contract &= bool(np.all(np.abs(nz) >= lam))
    nz = base.xi[base.xi != 0.0]
    contract &= bool(np.all(np.abs(nz) >= 1.0))

    _report(5, "thresholded least-squares invariants", [
        ("zero threshold equals plain least squares (<= 1e-10)", resid_ok),
        (f"active-set size non-increasing over the grid {sizes}", monotone),
        ("fixpoint idempotence", fixpoint),
        ("all survivors >= their threshold", contract),
    ])


def test_criterion_6_controller_design(designed_gains):
    t0 = time.time()
    g = designed_gains["current_d"]
    tau = g.tau_i
    dt = tau / 1000.0
    t, y = closed_loop_step_response(g, g.L_hat, g.r_hat, dt=dt,
                                     duration=8.0 * tau)
    k_tau = int(round(tau / dt))
    elapsed = time.time() - t0
    _report(6, "first-order loop by pole-zero cancellation", [
        (f"value at tau_i = {y[k_tau]:.4f} within 0.6321 +/- 0.002",
         abs(y[k_tau] - 0.6321) < 0.002),
        ("zero overshoot", np.max(y) <= 1.0 + 1e-9),
        (f"runtime < 1 s (took {elapsed:.2f} s)", elapsed < 1.0),
    ])


def test_criterion_7_end_to_end_tracking(single_stage_run, designed_gains,
                                         params):
    t0 = time.time()
    refs = ReferenceSchedule({
        "v_dcref": [(0.0, 1000.0), (1.0, 1020.0)],
        "i_qref": [(0.0, 0.0), (3.0, 2.0)],
        "v_gd": [(0.0, 800.0)], "v_gq": [(0.0, 0.0)], "i_PV": [(0.0, 10.0)],
    })
    x0 = np.zeros(7)
    x0[6] = 1000.0
    phys = simulate("single_stage", params, x0, refs, dt=1e-4, duration=5.0)
    dd_sys = assemble_data_driven_system(single_stage_run["model"],
                                         designed_gains, params, refs)
    dd = integrate(dd_sys, x0, 1e-4, 5.0)
    rmse = output_rmse(phys, dd)
    checks = []
    for name, series in output_signals(phys).items():
        full_scale = float(series.max() - series.min())
        ratio = rmse[name] / full_scale
        checks.append((f"{name} RMSE {ratio:.2e} of full scale < 1%",
                       ratio < 0.01))
    elapsed = time.time() - t0
    checks.append((f"runtime < 120 s (took {elapsed:.1f} s)", elapsed < 120.0))
    _report(7, "data-driven closed loop tracks the physical one", checks)


def test_criterion_8_closed_loop_identification(closed_loop_arsr):
    report = closed_loop_arsr["report"]
    p = closed_loop_arsr["params"]
    adaptive_total = float(np.sum(report.state_rmse))
    scalar_totals = {r["lambda"]: float(np.sum(r["state_rmse"]))
                     for r in closed_loop_arsr["rows"]}
    _report(8, "per-state thresholds on the closed-loop model", [
        ("gain scale disparity configured",
         p.K_i2 == 0.01 and p.K_i1 == 500.0),
        ("threshold vector has length 10", report.lambdas.size == 10),
        ("one entry below 0.1", bool(np.any(report.lambdas < 0.1))),
        ("one entry above 5", bool(np.any(report.lambdas > 5.0))),
        (f"adaptive total {adaptive_total:.2e} strictly beats every scalar",
         all(adaptive_total < v for v in scalar_totals.values())),
    ])


def test_criterion_9_fault_replay(single_stage_run, designed_gains, params):
    refs = ReferenceSchedule({
        "v_dcref": [(0.0, 1000.0)], "i_qref": [(0.0, 0.0)],
        "v_gd": [(0.0, 800.0)], "v_gq": [(0.0, 0.0)], "i_PV": [(0.0, 10.0)],
    })
    x0 = np.zeros(7)
    x0[6] = 1000.0
    checks = []
    for fault_value in (500.0, 0.0):
        fault = FaultSpec("v_gd", 800.0, fault_value, 3.0)
        physical = build_system("single_stage", params, refs, fault=fault)
        dd = assemble_data_driven_system(single_stage_run["model"],
                                         designed_gains, params, refs,
                                         fault=fault)
        rep = fault_study(physical, dd, fault, x0, x0, 1e-4, 5.0)
        finite = (np.all(np.isfinite(rep.candidate.X))
                  and np.all(np.isfinite(rep.reference.X))
                  and not rep.notes)
        ratio = rep.output_rmse["v_dc"] / 1000.0
        checks.append((f"fault to {fault_value} V stays finite", finite))
        checks.append((f"fault to {fault_value} V: v_dc RMSE "
                       f"{ratio:.2e} of nominal < 1%", ratio < 0.01))
    _report(9, "fault replay boundedness", checks)


def test_criterion_10_numerics():
    def rk4_err(dt):
        n = int(round(1.0 / dt))
        out = rk4_solve(lambda t, x: -x, np.array([1.0]), dt, n)
        return abs(out[-1, 0] - math.exp(-1.0))

    ratio = rk4_err(0.02) / rk4_err(0.01)

    dt = 1e-3
    t = np.arange(2001) * dt
    deriv_err = float(np.max(np.abs(
        numeric_derivatives(np.sin(t)[:, None], dt)[:, 0] - np.cos(t))))

    from pvarsr.plant import Schema
    toy = Schema("toy_acc", states=("x0",), inputs=())

    def traj(vals):
        X = np.asarray(vals, float)[:, None]
        return Trajectory(schema=toy, dt=1.0, X=X, U=np.zeros((3, 0)),
                          Xdot=np.zeros((3, 1)))

    exact_fixtures = (
        per_state_rmse(traj([1.0, 2.0, 3.0]), traj([1.0, 1.0, 1.0]))[0]
        == np.sqrt(5.0 / 3.0)
        and per_state_rmse(traj([1.0, 2.0, 3.0]), traj([4.0, 5.0, 6.0]))[0]
        == 3.0
        and per_state_rmse(traj([1.0, 2.0, 3.0]), traj([1.0, 2.0, 3.0]))[0]
        == 0.0)

    _report(10, "numerical kernels", [
        (f"RK4 halving ratio {ratio:.1f} in [14, 18]", 14.0 <= ratio <= 18.0),
        (f"numeric derivative max error {deriv_err:.2e} < 1e-5",
         deriv_err < 1e-5),
        ("RMSE matches hand-computed fixtures exactly", exact_fixtures),
    ])
