"""Shared helpers: exact sparse models built from the configured plant.

These models carry the true coefficients of the plant equations expressed
in library terms, so controller-assembly and evaluation tests can run a
"perfectly identified" model without paying for a regression.
"""
import numpy as np

from pvarsr.features import parse_term
from pvarsr.plant import (SINGLE_STAGE, TWO_STAGE, PlantParameters,
                          single_stage_rhs)
from pvarsr.regression import SparseModel


def _linear_rows(schema, rhs, p: PlantParameters, n_linear: int):
    """Per-state {term: coef} of the linear AC block via unit probes."""
    names = tuple(schema.states) + tuple(schema.inputs)
    base_x = np.zeros(schema.n)
    base_x[schema.state_index("v_dc")] = 1.0
    base_u = np.zeros(schema.m)
    if "d_ref" in schema.inputs:
        base_u[schema.input_index("d_ref")] = 0.5
    d0 = rhs(base_x, base_u, p)
    rows = {k: {} for k in range(n_linear)}
    for j, nm in enumerate(names):
        if nm in ("v_dc", "omega0", "d_ref"):
            continue
        if j < schema.n:
            x = base_x.copy()
            x[j] += 1.0
            d = rhs(x, base_u, p) - d0
        else:
            u = base_u.copy()
            u[j - schema.n] += 1.0
            d = rhs(base_x, u, p) - d0
        for k in range(n_linear):
            if abs(d[k]) > 1e-12:
                rows[k][nm] = float(d[k])
    return rows


def _assemble(schema, rows):
    names = tuple(schema.states) + tuple(schema.inputs)
    terms = sorted({t for row in rows.values() for t in row})
    xi = np.zeros((len(terms), schema.n))
    for k, row in rows.items():
        for term, coef in row.items():
            xi[terms.index(term), k] = coef
    return SparseModel(xi=xi, lambdas=np.ones(schema.n),
                       descriptors=[parse_term(t, names) for t in terms],
                       schema=schema)


def true_single_stage_model(p: PlantParameters) -> SparseModel:
    rows = _linear_rows(SINGLE_STAGE, single_stage_rhs, p, 6)
    rows[6] = {"i_PV": 1.0 / p.C_dc, "i_gd*v_gd/v_dc": -1.5 / p.C_dc}
    return _assemble(SINGLE_STAGE, rows)


def true_two_stage_model(p: PlantParameters) -> SparseModel:
    from pvarsr.plant import two_stage_rhs
    rows = _linear_rows(TWO_STAGE, two_stage_rhs, p, 6)
    rows[6] = {"i_PV": 1.0 / p.C_dc, "i_PV*d_ref": -1.0 / p.C_dc,
               "i_gd*v_sd/v_dc": -1.5 / p.C_dc,
               "i_gq*v_sq/v_dc": -1.5 / p.C_dc}
    rows[7] = {"v_PV": 1.0 / p.L_b, "v_dc": -1.0 / p.L_b,
               "v_dc*d_ref": 1.0 / p.L_b}
    return _assemble(TWO_STAGE, rows)
