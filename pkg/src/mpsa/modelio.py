"""JSON documents for fitted models (format tag ``mpsa-model/1``).

Floats are written with ``repr`` precision, so a round trip reproduces every
parameter bit for bit. Bases are stored row-major as flat lists.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .errors import InputError, ParseError
from .mixture import MpsaModel, PsaComponent
from .psa import PsaEstimate

VERSION = "mpsa-model/1"
WEIGHT_SUM_TOL = 1e-6


def model_to_dict(model: MpsaModel) -> dict:
    return {
        "version": VERSION,
        "p": model.dim,
        "C": model.n_components,
        "alpha": model.alpha,
        "components": [
            {
                "weight": float(c.weight),
                "mean": [float(v) for v in c.mean],
                "composition": [int(g) for g in c.composition],
                "block_eigenvalues": [float(v) for v in c.block_eigenvalues],
                "basis": [float(v) for v in np.asarray(c.basis).ravel(order="C")],
            }
            for c in model.components
        ],
    }


def serialize(model: MpsaModel) -> str:
    return json.dumps(model_to_dict(model), indent=1)


def _get(doc, key, where, kind=None):
    if not isinstance(doc, dict) or key not in doc:
        raise ParseError(f"missing field {key!r}", where or "<root>")
    value = doc[key]
    path = f"{where}.{key}" if where else key
    if kind is not None and not isinstance(value, kind):
        raise ParseError(f"field {key!r} has the wrong type", path)
    return value, path


def _numbers(values, path, length=None):
    if not isinstance(values, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
    ):
        raise ParseError("expected a list of numbers", path)
    if length is not None and len(values) != length:
        raise ParseError(f"expected {length} entries, got {len(values)}", path)
    arr = np.array(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ParseError("non-finite number", path)
    return arr


def model_from_dict(doc) -> MpsaModel:
    version, _ = _get(doc, "version", "", str)
    if version != VERSION:
        raise ParseError(f"unsupported version {version!r}", "version")
    p, _ = _get(doc, "p", "", int)
    C, _ = _get(doc, "C", "", int)
    alpha = doc.get("alpha")
    if alpha is not None and not isinstance(alpha, (int, float)):
        raise ParseError("alpha must be a number or null", "alpha")
    comps, cpath = _get(doc, "components", "", list)
    if len(comps) != C or C < 1:
        raise ParseError(f"expected {C} components, got {len(comps)}", cpath)
    out = []
    for c, comp in enumerate(comps):
        where = f"components[{c}]"
        weight, wpath = _get(comp, "weight", where)
        weight = float(_numbers([weight], wpath)[0])
        if weight <= 0:
            raise InputError(f"{wpath}: weight must be positive")
        mean = _numbers(*_get(comp, "mean", where), length=p)
        gamma, gpath = _get(comp, "composition", where, list)
        if not all(isinstance(g, int) and g >= 1 for g in gamma) or sum(gamma) != p:
            raise ParseError(f"invalid composition of {p}", gpath)
        lam = _numbers(*_get(comp, "block_eigenvalues", where), length=len(gamma))
        if np.any(lam <= 0):
            raise InputError(f"{where}.block_eigenvalues: must be positive")
        basis = _numbers(*_get(comp, "basis", where), length=p * p).reshape(p, p)
        out.append(PsaComponent(weight, PsaEstimate(tuple(gamma), lam, basis, mean)))
    total = sum(c.weight for c in out)
    if not math.isclose(total, 1.0, rel_tol=0.0, abs_tol=WEIGHT_SUM_TOL):
        raise InputError(f"weights sum to {total}, expected 1")
    return MpsaModel(tuple(out), None if alpha is None else float(alpha))


def deserialize(text: str) -> MpsaModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from exc
    return model_from_dict(doc)
