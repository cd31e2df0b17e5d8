"""Run configuration: flat sectioned key-value files (INI syntax).

Every experiment is fully described by one file; commands echo the
resolved configuration into their output directory so runs can be audited
and replayed bit for bit.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .arsr import ArsrConfig
from .features import LibrarySpec
from .plant import PlantParameters, SCHEMAS, default_parameters
from .simulator import FaultSpec, ReferenceSchedule


class ConfigError(Exception):
    """Missing or malformed configuration entry; carries the field path."""


@dataclass
class RunConfig:
    model: str
    params: PlantParameters
    dt: float
    duration: float
    x0: np.ndarray
    deriv_mode: str
    drive: str
    references: dict[str, list[tuple[float, float]]]
    library: LibrarySpec
    arsr: ArsrConfig
    sweep_grid: list[float]
    tau_i: float
    out_dir: str
    fault: Optional[FaultSpec] = None
    split_ratio: float = 0.8

    def schedule(self) -> ReferenceSchedule:
        return ReferenceSchedule(self.references)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _pairs(text: str) -> list[tuple[float, float]]:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        t, v = item.split(":")
        out.append((float(t), float(v)))
    return out


def _lambda_spec(text: str):
    vals = _floats(text)
    return vals[0] if len(vals) == 1 else np.array(vals)


def load_config(path) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # signal and parameter names are case-sensitive
    read = cp.read(path)
    if not read:
        raise ConfigError(f"cannot read config file: {path}")
    try:
        return _parse(cp)
    except ConfigError:
        raise
    except (configparser.Error, KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _require(cp, section, key):
    if not cp.has_option(section, key):
        raise ConfigError(f"missing required field [{section}] {key}")
    return cp.get(section, key)


def _parse(cp) -> RunConfig:
    model = _require(cp, "run", "model")
    if model not in SCHEMAS:
        raise ConfigError(f"[run] model must be one of {sorted(SCHEMAS)}")
    out_dir = cp.get("run", "out", fallback="runs/out")

    defaults = default_parameters()
    kwargs = {}
    for f in dataclasses.fields(PlantParameters):
        if cp.has_option("plant", f.name):
            kwargs[f.name] = cp.getfloat("plant", f.name)
        else:
            kwargs[f.name] = getattr(defaults, f.name)
    params = PlantParameters(**kwargs)

    dt = float(_require(cp, "simulation", "dt"))
    duration = float(_require(cp, "simulation", "duration"))
    schema = SCHEMAS[model]
    if cp.has_option("simulation", "x0"):
        x0 = np.array(_floats(cp.get("simulation", "x0")))
        if x0.size != schema.n:
            raise ConfigError(f"[simulation] x0 must have {schema.n} entries")
    else:
        x0 = default_x0(model)
    deriv_mode = cp.get("simulation", "derivatives", fallback="exact")
    if deriv_mode not in ("exact", "numeric"):
        raise ConfigError("[simulation] derivatives must be exact or numeric")
    drive = cp.get("simulation", "drive", fallback="physical")
    if drive not in ("physical", "scheduled"):
        raise ConfigError("[simulation] drive must be physical or scheduled")

    if not cp.has_section("references"):
        raise ConfigError("missing required section [references]")
    references = {key: _pairs(val) for key, val in cp.items("references")}

    lib = LibrarySpec(
        degree=cp.getint("library", "degree", fallback=2),
        include_constant=cp.getboolean("library", "constant", fallback=True),
        trig=cp.getboolean("library", "trig", fallback=False),
        rational=cp.getboolean("library", "rational", fallback=True),
        rational_degree=cp.getint("library", "rational_degree", fallback=2),
        exclude=tuple(v.strip() for v in
                      cp.get("library", "exclude", fallback="omega0").split(",")
                      if v.strip()),
    )

    arsr = ArsrConfig(
        lambda_init=_lambda_spec(cp.get("arsr", "lambda_init", fallback="1")),
        lambda_max=_lambda_spec(cp.get("arsr", "lambda_max", fallback="40")),
        steps=_lambda_spec(cp.get("arsr", "steps", fallback="1")),
        max_iters=cp.getint("arsr", "max_iters", fallback=10),
        split_ratio=cp.getfloat("arsr", "split", fallback=0.8),
    )

    sweep_grid = _floats(cp.get("sweep", "grid", fallback="1,5,10,15,20,25,30,35,40"))
    tau_i = cp.getfloat("control", "tau_i", fallback=0.005)

    fault = None
    if cp.has_section("fault"):
        fault = FaultSpec(
            signal=_require(cp, "fault", "signal"),
            pre_value=float(_require(cp, "fault", "pre")),
            fault_value=float(_require(cp, "fault", "value")),
            time=float(_require(cp, "fault", "time")),
        )
        if not 0.0 <= fault.time <= duration:
            raise ConfigError("[fault] time must lie within the horizon")

    return RunConfig(
        model=model, params=params, dt=dt, duration=duration, x0=x0,
        deriv_mode=deriv_mode, drive=drive, references=references, library=lib, arsr=arsr,
        sweep_grid=sweep_grid, tau_i=tau_i, out_dir=out_dir, fault=fault,
        split_ratio=arsr.split_ratio)


def default_x0(model: str) -> np.ndarray:
    schema = SCHEMAS[model]
    x0 = np.zeros(schema.n)
    x0[schema.state_index("v_dc")] = 1000.0
    return x0


def dump_config(config: RunConfig, path):
    """Write the fully resolved configuration (run manifest)."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["run"] = {"model": config.model, "out": config.out_dir}
    cp["plant"] = {f.name: repr(getattr(config.params, f.name))
                   for f in dataclasses.fields(PlantParameters)}
    cp["simulation"] = {
        "dt": repr(config.dt), "duration": repr(config.duration),
        "x0": ",".join(repr(float(v)) for v in config.x0),
        "derivatives": config.deriv_mode, "drive": config.drive}
    cp["references"] = {
        name: ",".join(f"{t!r}:{v!r}" for t, v in pairs)
        for name, pairs in config.references.items()}
    cp["library"] = {
        "degree": str(config.library.degree),
        "constant": str(config.library.include_constant).lower(),
        "trig": str(config.library.trig).lower(),
        "rational": str(config.library.rational).lower(),
        "rational_degree": str(config.library.rational_degree),
        "exclude": ",".join(config.library.exclude)}

    def _fmt(v):
        arr = np.atleast_1d(np.asarray(v, dtype=float))
        return ",".join(repr(float(x)) for x in arr)

    cp["arsr"] = {
        "lambda_init": _fmt(config.arsr.lambda_init),
        "lambda_max": _fmt(config.arsr.lambda_max),
        "steps": _fmt(config.arsr.steps),
        "max_iters": str(config.arsr.max_iters),
        "split": repr(config.arsr.split_ratio)}
    cp["sweep"] = {"grid": ",".join(repr(v) for v in config.sweep_grid)}
    cp["control"] = {"tau_i": repr(config.tau_i)}
    if config.fault is not None:
        cp["fault"] = {
            "signal": config.fault.signal,
            "pre": repr(config.fault.pre_value),
            "value": repr(config.fault.fault_value),
            "time": repr(config.fault.time)}
    with open(path, "w") as fh:
        cp.write(fh)
