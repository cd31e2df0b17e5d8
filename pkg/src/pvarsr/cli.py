"""Batch command-line front end.

Subcommands::

    pvarsr simulate --config cfg.ini [--out DIR]
    pvarsr identify --config cfg.ini --mode {scalar-sweep,arsr} [--out DIR]
    pvarsr control  --config cfg.ini --model model.txt [--out DIR]
    pvarsr fault    --config cfg.ini --model model.txt [--out DIR]

Exit codes: 0 success, 2 config error, 3 simulation failure, 4 regression
failure, 5 missing identified coefficient, 6 missing fault block.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import arsr as arsr_mod
from . import control as control_mod
from . import evaluation, plotting, regression
from .config import ConfigError, RunConfig, dump_config, load_config
from .errors import MissingTerm, NonFinite, PvArsrError, SingularState
from .simulator import build_system, integrate, simulate, split_train_test

EXIT_CONFIG = 2
EXIT_SIMULATION = 3
EXIT_REGRESSION = 4
EXIT_MISSING_TERM = 5
EXIT_NO_FAULT = 6


def _prepare(args) -> tuple[RunConfig, str]:
    config = load_config(args.config)
    out_dir = args.out or config.out_dir
    os.makedirs(out_dir, exist_ok=True)
    config.out_dir = out_dir
    dump_config(config, os.path.join(out_dir, "manifest.ini"))
    return config, out_dir


def _run_physical(config: RunConfig):
    return simulate(config.model, config.params, config.x0, config.schedule(),
                    fault=config.fault, dt=config.dt, duration=config.duration,
                    deriv_mode=config.deriv_mode, drive=config.drive)


def cmd_simulate(args) -> int:
    try:
        config, out_dir = _prepare(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        traj = _run_physical(config)
    except (NonFinite, SingularState, PvArsrError) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    csv_path = os.path.join(out_dir, "trajectory.csv")
    traj.to_csv(csv_path)
    plotting.save_trajectory_figure(
        traj, os.path.join(out_dir, "trajectory.png"),
        title=f"{config.model} physical run")
    print(f"wrote {csv_path}")
    return 0


def cmd_identify(args) -> int:
    try:
        config, out_dir = _prepare(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        traj = _run_physical(config)
    except (NonFinite, SingularState, PvArsrError) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    train, test = split_train_test(traj, config.split_ratio)
    outputs = list(evaluation.output_signals(traj))
    try:
        if args.mode == "arsr":
            report = arsr_mod.adaptive_sindy(train, test, config.library,
                                             config.arsr)
            model = report.model
            report.history_csv(os.path.join(out_dir, "arsr_history.csv"))
            _write_arsr_report(report, test, outputs,
                               os.path.join(out_dir, "arsr_report.csv"))
        else:
            rows = arsr_mod.scalar_lambda_sweep(
                train, test, config.library, config.sweep_grid, outputs=outputs)
            _write_sweep_report(rows, outputs,
                                os.path.join(out_dir, "sweep_report.csv"))
            plotting.save_sweep_figure(
                rows, os.path.join(out_dir, "sweep_rmse.png"), outputs=outputs)
            finite = [r for r in rows
                      if np.isfinite(sum(r["outputs"].values()))]
            best = min(finite or rows,
                       key=lambda r: sum(r["outputs"].values()))
            model = best["model"]
    except (PvArsrError, np.linalg.LinAlgError) as exc:
        print(f"regression failed: {exc}", file=sys.stderr)
        return EXIT_REGRESSION
    model_path = os.path.join(out_dir, "model.txt")
    regression.save_model(model, model_path)
    print(f"wrote {model_path}")
    return 0


def _write_sweep_report(rows, outputs, path):
    with open(path, "w") as fh:
        fh.write(f"# convention: {evaluation.Q_CONVENTION}\n")
        fh.write("lambda," + ",".join(f"{o}_rmse" for o in outputs)
                 + ",n_active\n")
        for r in rows:
            vals = ",".join(repr(r["outputs"][o]) for o in outputs)
            fh.write(f"{r['lambda']!r},{vals},{r['n_active']}\n")


def _write_arsr_report(report, test, outputs, path):
    out_map = {}
    try:
        sim = regression.simulate_identified(
            report.model, test.X[0], test, test.dt, test.duration)
        out_map = evaluation.output_rmse(test, sim, outputs)
    except (NonFinite, SingularState):
        out_map = {o: float("inf") for o in outputs}
    with open(path, "w") as fh:
        fh.write(f"# convention: {evaluation.Q_CONVENTION}\n")
        fh.write("# lambda: "
                 + ",".join(repr(float(l)) for l in report.lambdas) + "\n")
        fh.write("# optimized_order: "
                 + ",".join(str(i) for i in report.optimized_order) + "\n")
        fh.write("kind,name,rmse\n")
        for o in outputs:
            fh.write(f"output,{o},{out_map[o]!r}\n")
        for k, state in enumerate(report.model.schema.states):
            fh.write(f"state,{state},{float(report.state_rmse[k])!r}\n")


def _load_model_arg(args):
    return regression.load_model(args.model)


def cmd_control(args) -> int:
    try:
        config, out_dir = _prepare(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        model = _load_model_arg(args)
        gains = control_mod.design_from_model(model, config.tau_i)
    except MissingTerm as exc:
        print(f"missing coefficient: {exc}", file=sys.stderr)
        return EXIT_MISSING_TERM
    g = gains["current_d"]
    with open(os.path.join(out_dir, "gains.txt"), "w") as fh:
        fh.write(f"L_hat: {float(g.L_hat)!r}\nr_hat: {float(g.r_hat)!r}\n")
        fh.write(f"tau_i: {float(g.tau_i)!r}\nk_p: {float(g.k_p)!r}\n"
                 f"k_i: {float(g.k_i)!r}\n")
    t, resp = control_mod.closed_loop_step_response(
        g, g.L_hat, g.r_hat, dt=g.tau_i / 1000.0, duration=8.0 * g.tau_i)
    np.savetxt(os.path.join(out_dir, "step_response.csv"),
               np.column_stack([t, resp]), delimiter=",",
               header="t,response", comments="", fmt="%.17g")
    plotting.save_step_response_figure(
        t, resp, g.tau_i, os.path.join(out_dir, "step_response.png"))
    try:
        phys = _run_physical(config)
        dd_system = control_mod.assemble_data_driven_system(
            model, gains, config.params, config.schedule(), fault=config.fault)
        x0_dd = phys.X[0, :model.schema.n]
        dd = integrate(dd_system, x0_dd, config.dt, config.duration)
    except (NonFinite, SingularState, PvArsrError) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    report = evaluation.compare_models(phys, dd, scenario="tracking")
    report.write_csv(os.path.join(out_dir, "tracking_report.csv"))
    report.write_plot_data(out_dir, "tracking")
    plotting.save_comparison_figure(
        report, os.path.join(out_dir, "tracking.png"),
        title="reference tracking: physical vs data-driven")
    print(f"wrote {os.path.join(out_dir, 'tracking_report.csv')}")
    return 0


def cmd_fault(args) -> int:
    try:
        config, out_dir = _prepare(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if config.fault is None:
        print("config has no [fault] section", file=sys.stderr)
        return EXIT_NO_FAULT
    try:
        model = _load_model_arg(args)
        gains = control_mod.design_from_model(model, config.tau_i)
    except MissingTerm as exc:
        print(f"missing coefficient: {exc}", file=sys.stderr)
        return EXIT_MISSING_TERM
    try:
        physical = build_system(config.model, config.params, config.schedule(),
                                fault=config.fault)
        dd = control_mod.assemble_data_driven_system(
            model, gains, config.params, config.schedule(), fault=config.fault)
        report = evaluation.fault_study(
            physical, dd, config.fault, config.x0,
            config.x0[:model.schema.n], config.dt, config.duration,
            scenario=f"fault_{config.fault.signal}")
    except (NonFinite, SingularState, PvArsrError) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_SIMULATION
    report.write_csv(os.path.join(out_dir, "fault_report.csv"))
    report.write_plot_data(out_dir, "fault")
    plotting.save_comparison_figure(
        report, os.path.join(out_dir, "fault.png"),
        title=f"fault replay: {config.fault.signal} "
              f"{config.fault.pre_value} -> {config.fault.fault_value}")
    print(f"wrote {os.path.join(out_dir, 'fault_report.csv')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvarsr",
        description="Simulate, identify, control and validate PV plant models")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, needs_model=False, needs_mode=False):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        if needs_mode:
            p.add_argument("--mode", choices=["scalar-sweep", "arsr"],
                           default="arsr")
        if needs_model:
            p.add_argument("--model", required=True)
        p.set_defaults(fn=fn)

    add("simulate", cmd_simulate)
    add("identify", cmd_identify, needs_mode=True)
    add("control", cmd_control, needs_model=True)
    add("fault", cmd_fault, needs_model=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
