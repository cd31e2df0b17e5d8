"""Sparse regression core: per-state sequentially thresholded least squares.

The sparsity penalty is realized as a hard magnitude threshold: after each
least-squares pass, coefficients with magnitude below the state's threshold
are zeroed and the survivors are refit, until the active set stabilizes.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import NonFinite, RankDeficientWarning, SchemaMismatch
from .features import TermDescriptor, TermEvaluator, parse_term, term_name
from .plant import Schema, SCHEMAS
from .simulator import Trajectory

_FINITE_LIMIT = 1e12


class LstsqResult(NamedTuple):
    coef: np.ndarray
    rank: int
    rank_deficient: bool


def least_squares(theta: np.ndarray, b: np.ndarray,
                  active: Optional[np.ndarray] = None,
                  warn: bool = True) -> LstsqResult:
    """Minimum-norm least squares on the active columns (SVD based).

    Inactive entries of the returned coefficient vector are zero.  Rank
    deficiency is reported via ``RankDeficientWarning`` but the solution is
    still returned.
    """
    theta = np.asarray(theta, dtype=float)
    K = theta.shape[1]
    if active is None:
        active = np.ones(K, dtype=bool)
    cols = np.flatnonzero(active)
    coef = np.zeros(K)
    if cols.size == 0:
        return LstsqResult(coef, 0, False)
    sub = theta[:, cols]
    sol, _, rank, _ = np.linalg.lstsq(sub, b, rcond=None)
    coef[cols] = sol
    deficient = rank < cols.size
    if deficient and warn:
        warnings.warn(f"rank deficient: numerical rank {rank} < {cols.size} columns",
                      RankDeficientWarning, stacklevel=2)
    return LstsqResult(coef, int(rank), deficient)


@dataclass
class SparseModel:
    """Identified model xdot = theta(x, u) @ xi with per-state thresholds."""

    xi: np.ndarray                 # K x n
    lambdas: np.ndarray            # length n
    descriptors: list[TermDescriptor]
    schema: Schema
    meta: dict = field(default_factory=dict)

    @property
    def var_names(self):
        return tuple(self.schema.states) + tuple(self.schema.inputs)

    def active_terms(self, k: int) -> dict[str, float]:
        names = self.var_names
        return {term_name(self.descriptors[j], names): self.xi[j, k]
                for j in np.flatnonzero(self.xi[:, k])}

    def coefficient(self, state: str, term: str) -> float:
        """Coefficient of a named term in one state equation (0 if absent)."""
        k = self.schema.state_index(state)
        return self.active_terms(k).get(term, 0.0)


def _threshold_column(theta, b, lam, max_iters, c0=None):
    """STLSQ for one state; returns (coef, iterations, rank_deficient)."""
    if c0 is None:
        res = least_squares(theta, b, warn=False)
        c, deficient = res.coef, res.rank_deficient
    else:
        c, deficient = np.array(c0, dtype=float), False
    iters = 0
    for _ in range(max_iters):
        iters += 1
        active = np.abs(c) >= lam if lam > 0 else np.ones(c.size, dtype=bool)
        res = least_squares(theta, b, active=active, warn=False)
        deficient = deficient or res.rank_deficient
        new_active = np.abs(res.coef) >= lam if lam > 0 else active
        converged = np.array_equal(active, new_active)
        c = res.coef
        if converged:
            break
    # Enforce the threshold contract even when max_iters cut the loop short.
    if lam > 0:
        c = np.where(np.abs(c) >= lam, c, 0.0)
    return c, iters, deficient


def stlsq(theta: np.ndarray, xdot: np.ndarray, lambdas, max_iters: int = 10,
          descriptors=None, schema: Schema | None = None,
          init: Optional[np.ndarray] = None) -> SparseModel:
    """Sequentially thresholded least squares, one threshold per state.

    ``init`` optionally provides the dense first-pass solution (K x n) so
    that repeated calls on the same data can skip the full factorization.
    """
    theta = np.asarray(theta, dtype=float)
    xdot = np.asarray(xdot, dtype=float)
    if xdot.ndim == 1:
        xdot = xdot[:, None]
    n = xdot.shape[1]
    lambdas = np.broadcast_to(np.asarray(lambdas, dtype=float), (n,)).copy()
    if np.any(lambdas < 0):
        raise ValueError("thresholds must be non-negative")
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    xi = np.zeros((theta.shape[1], n))
    iters, deficient, empty = [], [], []
    for k in range(n):
        c0 = init[:, k] if init is not None else None
        c, it, rd = _threshold_column(theta, xdot[:, k], lambdas[k],
                                      max_iters, c0=c0)
        xi[:, k] = c
        iters.append(it)
        deficient.append(rd)
        if not np.any(c):
            empty.append(k)
    residuals = np.linalg.norm(xdot - theta @ xi, axis=0)
    model = SparseModel(
        xi=xi, lambdas=lambdas,
        descriptors=list(descriptors) if descriptors is not None else [],
        schema=schema if schema is not None else _anonymous_schema(theta, xdot),
        meta={"iterations": iters, "rank_deficient": deficient,
              "empty_states": empty, "residual_norms": residuals})
    if any(deficient):
        warnings.warn("rank-deficient fit for states "
                      f"{[k for k, d in enumerate(deficient) if d]}",
                      RankDeficientWarning, stacklevel=2)
    return model


def _anonymous_schema(theta, xdot) -> Schema:
    n = xdot.shape[1]
    return Schema("anonymous",
                  states=tuple(f"x{k}" for k in range(n)), inputs=())


def simulate_identified(model: SparseModel, x0, inputs, dt: float,
                        duration: float) -> Trajectory:
    """RK4 integration of the identified dynamics xdot = theta(x, u) @ xi.

    ``inputs`` is either a callable t -> input vector or a Trajectory whose
    recorded inputs are linearly interpolated onto stage times.
    """
    schema = model.schema
    x0 = schema.check_state(x0)
    if isinstance(inputs, Trajectory):
        inputs = TrajectoryInputs(inputs)
    evaluator = TermEvaluator(model.descriptors, schema)
    xi = model.xi

    def rhs(t, x):
        u = inputs(t)
        return evaluator.row(x, u) @ xi

    n_steps = int(round(duration / dt))
    N = n_steps + 1
    X = np.empty((N, schema.n))
    U = np.empty((N, schema.m))
    x = x0
    for k in range(n_steps + 1):
        t = k * dt
        if not np.all(np.abs(x) < _FINITE_LIMIT):
            raise NonFinite(f"identified model diverged at t = {t:.6g}", time=t)
        X[k] = x
        U[k] = inputs(t)
        if k < n_steps:
            from .simulator import rk4_step
            x = rk4_step(rhs, t, x, dt)
    Xdot = np.empty_like(X)
    for k in range(N):
        Xdot[k] = evaluator.row(X[k], U[k]) @ xi
    return Trajectory(schema=schema, dt=dt, X=X, U=U, Xdot=Xdot)


class TrajectoryInputs:
    """Linear interpolation of a trajectory's recorded input samples."""

    def __init__(self, traj: Trajectory):
        self.U = traj.U
        self.dt = traj.dt
        self.n_last = len(traj) - 1

    def __call__(self, t: float) -> np.ndarray:
        s = t / self.dt
        i = int(s)
        if i >= self.n_last:
            return self.U[self.n_last]
        if i < 0:
            return self.U[0]
        w = s - i
        return (1.0 - w) * self.U[i] + w * self.U[i + 1]


# ---------------------------------------------------------------------------
# Plain-text model export: `state, term, coefficient` rows plus a Lambda line.

def save_model(model: SparseModel, path):
    names = model.var_names
    with open(path, "w") as fh:
        fh.write(f"schema: {model.schema.name}\n")
        fh.write("lambda: " + ",".join(repr(float(l)) for l in model.lambdas) + "\n")
        fh.write("state,term,coefficient\n")
        for k, state in enumerate(model.schema.states):
            for j in np.flatnonzero(model.xi[:, k]):
                name = term_name(model.descriptors[j], names)
                fh.write(f"{state},{name},{float(model.xi[j, k])!r}\n")


def load_model(path) -> SparseModel:
    with open(path) as fh:
        schema_line = fh.readline().strip()
        lambda_line = fh.readline().strip()
        header = fh.readline().strip()
        if not schema_line.startswith("schema: ") or header != "state,term,coefficient":
            raise SchemaMismatch("not a sparse-model file")
        schema = SCHEMAS[schema_line.split(": ", 1)[1]]
        lambdas = np.array([float(v) for v in
                            lambda_line.split(": ", 1)[1].split(",")])
        names = tuple(schema.states) + tuple(schema.inputs)
        rows = []
        for line in fh:
            line = line.strip()
            if line:
                state, term, coef = line.split(",")
                rows.append((state, term, float(coef)))
    terms: list[str] = []
    for _, term, _ in rows:
        if term not in terms:
            terms.append(term)
    descriptors = [parse_term(t, names) for t in terms]
    xi = np.zeros((len(terms), schema.n))
    for state, term, coef in rows:
        xi[terms.index(term), schema.state_index(state)] = coef
    return SparseModel(xi=xi, lambdas=lambdas, descriptors=descriptors,
                       schema=schema, meta={"loaded": True})
