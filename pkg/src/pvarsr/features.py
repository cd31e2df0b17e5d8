"""Candidate-function library construction.

Columns are ordered: constant, inputs, states, degree-2 products of
(inputs, states), higher degrees, trig terms, rational terms (monomial
divided by the DC-link voltage).  The ordering is a pure function of the
schema and the library options, never of the data.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateColumnWarning, SchemaMismatch, SingularState
from .plant import Schema

_POSITIVE_DEFINITE_VARS = ("v_dc",)


@dataclass(frozen=True)
class TermDescriptor:
    """One candidate function over the combined (states, inputs) variables.

    ``exponents`` indexes into the variable list (states first, then
    inputs).  Rational terms divide the numerator monomial by the variable
    at ``den_var``, which must be positive definite.
    """

    kind: str  # constant | monomial | trig | rational
    exponents: tuple[int, ...] = ()
    trig_fn: str | None = None
    trig_var: int | None = None
    den_var: int | None = None


@dataclass(frozen=True)
class LibrarySpec:
    """Options controlling which candidate terms are generated."""

    degree: int = 2
    include_constant: bool = True
    trig: bool = False
    rational: bool = True
    rational_degree: int = 2
    exclude: tuple[str, ...] = ("omega0",)

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("library degree must be at least 1")


@dataclass
class FeatureLibrary:
    """Descriptors plus the evaluated N x K matrix for one trajectory."""

    descriptors: list[TermDescriptor]
    theta: np.ndarray
    var_names: tuple[str, ...]

    @property
    def K(self) -> int:
        return len(self.descriptors)

    def names(self) -> list[str]:
        return [term_name(d, self.var_names) for d in self.descriptors]


def variable_names(schema: Schema) -> tuple[str, ...]:
    return tuple(schema.states) + tuple(schema.inputs)


def make_descriptors(schema: Schema, spec: LibrarySpec) -> list[TermDescriptor]:
    """Deterministic descriptor list for a schema and library options."""
    names = variable_names(schema)
    q = len(names)
    # Enumeration follows the inputs-first pattern of the degree-2 block:
    # u1^2, u1 u2, ..., u1 x1, ..., um^2, x1^2, ...
    order = ([len(schema.states) + j for j in range(schema.m)]
             + list(range(schema.n)))
    order = [i for i in order if names[i] not in spec.exclude]

    def mono(indices) -> TermDescriptor:
        e = [0] * q
        for i in indices:
            e[i] += 1
        return TermDescriptor(kind="monomial", exponents=tuple(e))

    descs: list[TermDescriptor] = []
    if spec.include_constant:
        descs.append(TermDescriptor(kind="constant", exponents=(0,) * q))
    for d in range(1, spec.degree + 1):
        for combo in itertools.combinations_with_replacement(order, d):
            descs.append(mono(combo))
    if spec.trig:
        for fn in ("sin", "cos"):
            for i in order:
                descs.append(TermDescriptor(kind="trig", exponents=(0,) * q,
                                            trig_fn=fn, trig_var=i))
    if spec.rational:
        den_candidates = [i for i, nm in enumerate(names)
                          if nm in _POSITIVE_DEFINITE_VARS]
        for den in den_candidates:
            num_order = [i for i in order if i != den]
            for d in range(1, spec.rational_degree + 1):
                for combo in itertools.combinations_with_replacement(num_order, d):
                    m = mono(combo)
                    descs.append(TermDescriptor(kind="rational",
                                                exponents=m.exponents,
                                                den_var=den))
    return descs


def _combined(x, u, schema: Schema) -> np.ndarray:
    x = schema.check_state(x)
    u = schema.check_input(u)
    return np.concatenate([x, u])


def _eval_descriptor(d: TermDescriptor, V: np.ndarray) -> np.ndarray:
    """Column of descriptor ``d`` over row-stacked variables V (N x q)."""
    if d.kind == "constant":
        return np.ones(V.shape[0])
    if d.kind == "trig":
        fn = np.sin if d.trig_fn == "sin" else np.cos
        return fn(V[:, d.trig_var])
    col = np.ones(V.shape[0])
    for i, e in enumerate(d.exponents):
        if e:
            col = col * V[:, i] ** e
    if d.kind == "rational":
        den = V[:, d.den_var]
        if np.any(den <= 0.0):
            raise SingularState("rational denominator <= 0 in library data")
        col = col / den
    return col


def build_library(traj, spec: LibrarySpec) -> FeatureLibrary:
    """Evaluate the candidate library on a trajectory."""
    if len(traj) == 0:
        raise SchemaMismatch("empty trajectory")
    schema = traj.schema
    descs = make_descriptors(schema, spec)
    V = np.hstack([traj.X, traj.U])
    theta = np.empty((V.shape[0], len(descs)))
    names = variable_names(schema)
    for j, d in enumerate(descs):
        theta[:, j] = _eval_descriptor(d, V)
        if not np.any(theta[:, j]):
            warnings.warn(
                f"library column '{term_name(d, names)}' is identically zero",
                DegenerateColumnWarning, stacklevel=2)
    return FeatureLibrary(descriptors=descs, theta=theta,
                          var_names=names)


def evaluate_library(descriptors, x, u, schema: Schema) -> np.ndarray:
    """Feature row at a single point; stacking rows reproduces build_library."""
    V = _combined(x, u, schema)[None, :]
    return np.array([_eval_descriptor(d, V)[0] for d in descriptors])


def term_name(d: TermDescriptor, names) -> str:
    """Canonical human-readable name, stable across runs."""
    if d.kind == "constant":
        return "1"
    if d.kind == "trig":
        return f"{d.trig_fn}({names[d.trig_var]})"
    factors = []
    for i, e in enumerate(d.exponents):
        if e == 1:
            factors.append(names[i])
        elif e > 1:
            factors.append(f"{names[i]}^{e}")
    num = "*".join(factors) if factors else "1"
    if d.kind == "rational":
        return f"{num}/{names[d.den_var]}"
    return num


def parse_term(name: str, names) -> TermDescriptor:
    """Inverse of ``term_name`` for canonical names."""
    names = list(names)
    q = len(names)
    if name == "1":
        return TermDescriptor(kind="constant", exponents=(0,) * q)
    if name.startswith(("sin(", "cos(")) and name.endswith(")"):
        fn, var = name[:3], name[4:-1]
        return TermDescriptor(kind="trig", exponents=(0,) * q,
                              trig_fn=fn, trig_var=names.index(var))
    den_var = None
    if "/" in name:
        num, den = name.rsplit("/", 1)
        den_var = names.index(den)
    else:
        num = name
    e = [0] * q
    for factor in num.split("*"):
        if factor == "1":
            continue
        if "^" in factor:
            var, p = factor.split("^")
            e[names.index(var)] += int(p)
        else:
            e[names.index(factor)] += 1
    kind = "rational" if den_var is not None else "monomial"
    return TermDescriptor(kind=kind, exponents=tuple(e), den_var=den_var)


class TermEvaluator:
    """Fast repeated evaluation of a fixed descriptor subset.

    Polynomial and rational terms are folded into one exponent matrix
    (denominators carry exponent -1); trig terms are handled separately.
    Used by the identified-model simulator where per-step cost matters.
    """

    def __init__(self, descriptors, schema: Schema):
        self.schema = schema
        self.n_terms = len(descriptors)
        q = schema.n + schema.m
        rows, cols = [], []
        self._trig = []  # (output index, fn, var)
        for j, d in enumerate(descriptors):
            if d.kind == "trig":
                self._trig.append((j, np.sin if d.trig_fn == "sin" else np.cos,
                                   d.trig_var))
                continue
            rows.append(j)
            e = np.array(d.exponents, dtype=float)
            if d.kind == "rational":
                e[d.den_var] -= 1.0
            cols.append(e)
        self._poly_rows = np.array(rows, dtype=int)
        self._E = np.array(cols, dtype=float) if cols else np.zeros((0, q))
        self._neg = np.where(np.any(self._E < 0, axis=0))[0]

    def row(self, x, u) -> np.ndarray:
        v = np.concatenate([x, u])
        out = np.empty(self.n_terms)
        if self._poly_rows.size:
            if self._neg.size and np.any(v[self._neg] <= 0.0):
                raise SingularState("rational denominator <= 0")
            out[self._poly_rows] = np.prod(v[None, :] ** self._E, axis=1)
        for j, fn, i in self._trig:
            out[j] = fn(v[i])
        return out
