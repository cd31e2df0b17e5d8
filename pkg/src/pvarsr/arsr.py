"""Adaptive per-state regulation of the sparsity thresholds.

The outer loop repeatedly picks the not-yet-optimized state with the worst
test RMSE, sweeps its threshold over a fixed grid while all other
thresholds stay put, keeps the best value found, and locks the state in.
Fitting uses the training split only; RMSE is always measured by
resimulating the identified model on the held-out test split.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DivergedSimulation, GridMismatch, SingularState
from .features import LibrarySpec, build_library
from .regression import SparseModel, least_squares, simulate_identified, stlsq
from .simulator import Trajectory


def per_state_rmse(reference: Trajectory, candidate: Trajectory) -> np.ndarray:
    """Root mean square error per state over all samples."""
    if reference.schema.name != candidate.schema.name:
        raise GridMismatch("trajectories have different schemas")
    if len(reference) != len(candidate) or reference.dt != candidate.dt:
        raise GridMismatch("trajectories have different time grids")
    diff = reference.X - candidate.X
    return np.sqrt(np.mean(diff ** 2, axis=0))


@dataclass
class ArsrConfig:
    """Sweep limits and stepping for the adaptive threshold search.

    Scalar entries broadcast over all states.
    """

    lambda_init: np.ndarray | float = 1.0
    lambda_max: np.ndarray | float = 40.0
    steps: np.ndarray | float = 1.0
    max_iters: int = 10
    split_ratio: float = 0.8

    def resolved(self, n: int):
        init = np.broadcast_to(np.asarray(self.lambda_init, float), (n,)).copy()
        lmax = np.broadcast_to(np.asarray(self.lambda_max, float), (n,)).copy()
        steps = np.broadcast_to(np.asarray(self.steps, float), (n,)).copy()
        if np.any(init < 0) or np.any(init > lmax):
            raise ValueError("need 0 <= lambda_init <= lambda_max per state")
        if np.any(steps <= 0):
            raise ValueError("steps must be positive")
        return init, lmax, steps


@dataclass
class ArsrReport:
    """Outcome of one adaptive run."""

    model: SparseModel
    lambdas: np.ndarray
    state_rmse: np.ndarray
    optimized_order: list[int]
    history: list[dict] = field(default_factory=list)  # iteration, state, lambda, rmse

    def history_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iteration,state,lambda,rmse\n")
            for row in self.history:
                fh.write(f"{row['iteration']},{row['state']},"
                         f"{row['lambda']!r},{row['rmse']!r}\n")


class _FitContext:
    """Caches the dense first-pass solution and per-(state, lambda) columns."""

    def __init__(self, train: Trajectory, lib_spec: LibrarySpec, max_iters: int):
        self.train = train
        self.library = build_library(train, lib_spec)
        self.max_iters = max_iters
        self.schema = train.schema
        self.init = np.column_stack([
            least_squares(self.library.theta, train.Xdot[:, k], warn=False).coef
            for k in range(self.schema.n)])
        self._columns: dict[tuple[int, float], np.ndarray] = {}

    def fit(self, lambdas: np.ndarray) -> SparseModel:
        n = self.schema.n
        xi = np.empty((self.library.K, n))
        for k in range(n):
            key = (k, float(lambdas[k]))
            if key not in self._columns:
                m = stlsq(self.library.theta, self.train.Xdot[:, k:k + 1],
                          [lambdas[k]], max_iters=self.max_iters,
                          init=self.init[:, k:k + 1])
                self._columns[key] = m.xi[:, 0]
            xi[:, k] = self._columns[key]
        return SparseModel(xi=xi, lambdas=np.array(lambdas, float),
                           descriptors=self.library.descriptors,
                           schema=self.schema)


def _test_rmse(model: SparseModel, test: Trajectory) -> np.ndarray | None:
    """Per-state RMSE of the resimulated model on the test split, or None."""
    try:
        sim = simulate_identified(model, test.X[0], test, test.dt, test.duration)
    except (DivergedSimulation, SingularState):
        return None
    return per_state_rmse(test, sim)


def adaptive_sindy(train: Trajectory, test: Trajectory, lib_spec: LibrarySpec,
                   config: ArsrConfig) -> ArsrReport:
    """Worst-state-first threshold adaptation over a fixed sweep grid."""
    if train.schema.name != test.schema.name:
        raise GridMismatch("train and test must share a schema")
    n = train.schema.n
    lam, lam_max, steps = config.resolved(n)
    ctx = _FitContext(train, lib_spec, config.max_iters)

    model = ctx.fit(lam)
    err = _test_rmse(model, test)
    initial_diverged = err is None
    if err is None:
        err = np.full(n, np.inf)
    history: list[dict] = []
    optimized: list[int] = []

    for outer in range(n):
        remaining = [k for k in range(n) if k not in optimized]
        # argmax over un-optimized states; ties break to the lowest index
        ind = max(remaining, key=lambda k: (err[k], -k))
        best_lam = lam[ind]
        best_err = err[ind]
        best_err_vec = err
        best_model = model
        any_finite = np.isfinite(best_err)
        grid = np.arange(lam[ind], lam_max[ind] + 0.5 * steps[ind], steps[ind])
        for cand in grid:
            trial = lam.copy()
            trial[ind] = cand
            cand_model = ctx.fit(trial)
            cand_err = _test_rmse(cand_model, test)
            rmse_val = np.inf if cand_err is None else cand_err[ind]
            history.append({"iteration": outer, "state": ind,
                            "lambda": float(cand), "rmse": float(rmse_val)})
            if cand_err is not None:
                any_finite = True
            if rmse_val < best_err:
                best_err = rmse_val
                best_lam = cand
                best_err_vec = cand_err
                best_model = cand_model
        if outer == 0 and initial_diverged and not any_finite:
            raise DivergedSimulation(
                "every candidate at the initial thresholds diverged")
        lam[ind] = best_lam
        err = best_err_vec
        model = best_model
        optimized.append(ind)

    return ArsrReport(model=model, lambdas=lam, state_rmse=np.asarray(err),
                      optimized_order=optimized, history=history)


def scalar_lambda_sweep(train: Trajectory, test: Trajectory,
                        lib_spec: LibrarySpec, grid, outputs=None,
                        max_iters: int = 10) -> list[dict]:
    """One fit + resimulation per scalar threshold value.

    Each row carries the per-state RMSE vector, the active-term count and,
    when ``outputs`` are requested, the per-output RMSE map.  Diverged
    resimulations are recorded as infinite.
    """
    from .evaluation import output_rmse  # local import to avoid a cycle

    grid = list(grid)
    if not grid:
        raise ValueError("empty threshold grid")
    ctx = _FitContext(train, lib_spec, max_iters)
    rows = []
    for lam in grid:
        model = ctx.fit(np.full(train.schema.n, float(lam)))
        try:
            sim = simulate_identified(model, test.X[0], test, test.dt,
                                      test.duration)
            state_rmse = per_state_rmse(test, sim)
            out_map = (output_rmse(test, sim, outputs) if outputs else {})
        except (DivergedSimulation, SingularState):
            state_rmse = np.full(train.schema.n, np.inf)
            out_map = {name: np.inf for name in (outputs or [])}
        rows.append({"lambda": float(lam),
                     "state_rmse": state_rmse,
                     "outputs": out_map,
                     "n_active": int(np.count_nonzero(model.xi)),
                     "model": model})
    return rows
