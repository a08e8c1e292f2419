"""JSON model specification files: schema, loading and canonical hashing."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .errors import ModelValidationError
from .models import (
    CompoundPoisson,
    ConstantJumps,
    ContinuousHazard,
    EmpiricalJumps,
    ExponentialJumps,
    FactorModel,
    GammaJumps,
    GammaSubordinator,
    MinDecomposition,
    TimeDeformation,
)
from .shot_noise import Kernel, ShotIntensity, ShotNoiseModel

log = logging.getLogger(__name__)

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}


def _obj(required, **props):
    return {"type": "object", "required": list(required), "properties": props, "additionalProperties": False}


def _kind(name, required=(), **props):
    return _obj(("kind",) + tuple(required), kind={"const": name}, **props)


def _by_kind(*variants):
    # Dispatch on "kind" with if/then so errors point at the chosen variant.
    kinds = [v["properties"]["kind"]["const"] for v in variants]
    return {
        "type": "object",
        "required": ["kind"],
        "properties": {"kind": {"enum": kinds}},
        "allOf": [
            {"if": {"required": ["kind"], "properties": {"kind": {"const": k}}}, "then": v}
            for k, v in zip(kinds, variants)
        ],
    }


JUMP_LAW = _by_kind(
    _kind("exponential", ("rate",), rate=_POS),
    _kind("gamma", ("shape", "rate"), shape=_POS, rate=_POS),
    _kind("constant", ("size",), size=_POS),
    _kind(
        "empirical",
        ("atoms",),
        atoms={
            "type": "array",
            "minItems": 1,
            "items": {"type": "array", "prefixItems": [_POS, {"type": "number", "minimum": 0, "maximum": 1}], "minItems": 2, "maxItems": 2},
        },
    ),
)

FACTOR = _by_kind(
    dict(
        _kind(
            "compound_poisson",
            ("intensity",),
            intensity=_NONNEG,
            jumps=JUMP_LAW,
            component_jumps={"type": "array", "minItems": 1, "items": JUMP_LAW},
        ),
        oneOf=[{"required": ["jumps"]}, {"required": ["component_jumps"]}],
    ),
    _kind("gamma_subordinator", ("shape_rate", "scale_rate"), shape_rate=_POS, scale_rate=_POS),
)

_PHI = {"type": "array", "items": _POS}
DEFORMATION = _by_kind(
    _kind("identity", (), covariate_scales=_PHI),
    _kind("power", ("exponent", "scale"), exponent=_POS, scale=_POS, covariate_scales=_PHI),
    _kind(
        "piecewise_linear",
        ("knots",),
        knots={"type": "array", "minItems": 2, "items": {"type": "array", "prefixItems": [_NONNEG, _NONNEG], "minItems": 2, "maxItems": 2}},
        covariate_scales=_PHI,
    ),
)

CONTINUOUS = _by_kind(
    _kind("zero"),
    _kind("linear", ("rate",), rate=_NONNEG),
    _kind("power", ("scale", "exponent"), scale=_POS, exponent=_POS),
    _kind(
        "piecewise_linear",
        ("knots",),
        knots={"type": "array", "minItems": 2, "items": {"type": "array", "prefixItems": [_NONNEG, _NONNEG], "minItems": 2, "maxItems": 2}},
    ),
)

KERNEL = _by_kind(
    _kind("constant", ("level",), level=_NONNEG),
    _kind("exponential_decay", ("g0", "decay"), g0=_POS, decay=_POS),
    _kind("linear_ramp", ("slope", "cap"), slope=_POS, cap=_POS, g0=_NONNEG),
)

INTENSITY = _by_kind(
    _kind("constant", ("rate",), rate=_NONNEG),
    _kind(
        "piecewise_constant",
        ("breakpoints", "rates"),
        breakpoints={"type": "array", "items": _POS},
        rates={"type": "array", "minItems": 1, "items": _NONNEG},
    ),
)

_COMPONENTS = {"type": "integer", "minimum": 1}
_LOADINGS = {"type": "array", "items": {"type": "array", "items": _NONNEG}}
_DESCRIPTION = {"type": "string"}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["model_type"],
    "properties": {"model_type": {"enum": ["factor", "shot_noise", "min_decomposition"]}},
    "allOf": [
        {
            "if": {"properties": {"model_type": {"const": "factor"}}},
            "then": _obj(
                ("model_type", "components", "factors", "loadings"),
                model_type={"const": "factor"},
                description=_DESCRIPTION,
                components=_COMPONENTS,
                factors={"type": "array", "minItems": 1, "items": FACTOR},
                loadings=_LOADINGS,
                deformation=DEFORMATION,
            ),
        },
        {
            "if": {"properties": {"model_type": {"const": "shot_noise"}}},
            "then": _obj(
                ("model_type", "components", "intensity", "marks", "kernels"),
                model_type={"const": "shot_noise"},
                description=_DESCRIPTION,
                components=_COMPONENTS,
                intensity=INTENSITY,
                marks=JUMP_LAW,
                kernels={"type": "array", "minItems": 1, "items": KERNEL},
            ),
        },
        {
            "if": {"properties": {"model_type": {"const": "min_decomposition"}}},
            "then": _obj(
                ("model_type", "components", "continuous_part"),
                model_type={"const": "min_decomposition"},
                description=_DESCRIPTION,
                components=_COMPONENTS,
                factors={"type": "array", "items": FACTOR},
                loadings=_LOADINGS,
                deformation=DEFORMATION,
                continuous_part={"type": "array", "minItems": 1, "items": CONTINUOUS},
            ),
        },
    ],
}

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


@dataclass(frozen=True)
class LoadedSpec:
    """A validated spec: the raw document, the built model and its digest."""

    document: dict
    model: object
    model_hash: str
    warnings: tuple = ()

    @property
    def model_type(self) -> str:
        return self.document["model_type"]


def _where(path) -> str:
    return "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in path)


def _leaf_errors(errors):
    # Descend into oneOf/anyOf/allOf to report the most specific failures.
    out = []
    for e in errors:
        if e.context:
            best = jsonschema.exceptions.best_match(e.context)
            out.extend(_leaf_errors([best]) if best is not None else [e])
        else:
            out.append(e)
    return out


def _unexpected_keys(error):
    if error.validator != "additionalProperties":
        return []
    allowed = set(error.schema.get("properties", {}))
    return sorted(k for k in error.instance if k not in allowed)


def _strip_unknown(doc) -> list[str]:
    """Remove unknown keys in place, returning warning messages."""
    notes = []
    for _ in range(100):
        found = False
        for err in _leaf_errors(_VALIDATOR.iter_errors(doc)):
            keys = _unexpected_keys(err)
            for key in keys:
                target = doc
                for p in err.absolute_path:
                    target = target[p]
                if key in target:
                    del target[key]
                    notes.append(f"ignored unknown key {key!r} at {_where(err.absolute_path)}")
                    found = True
        if not found:
            break
    return notes


def validate_document(doc, lenient: bool = False) -> tuple[dict, list[str]]:
    """Schema-check ``doc``; with ``lenient`` unknown keys are dropped with a warning.

    Raises
    ------
    ModelValidationError
        Naming the offending key and its location.
    """
    if not isinstance(doc, dict):
        raise ModelValidationError("spec must be a JSON object")
    doc = copy.deepcopy(doc)
    notes = _strip_unknown(doc) if lenient else []
    for note in notes:
        log.warning(note)
    errors = sorted(_leaf_errors(_VALIDATOR.iter_errors(doc)), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        keys = _unexpected_keys(err)
        if keys:
            raise ModelValidationError(f"unknown key {keys[0]!r} at {_where(err.absolute_path)}")
        raise ModelValidationError(f"invalid spec at {_where(err.absolute_path)}: {err.message}")
    return doc, notes


def _jump_law(d):
    kind = d["kind"]
    if kind == "exponential":
        return ExponentialJumps(d["rate"])
    if kind == "gamma":
        return GammaJumps(d["shape"], d["rate"])
    if kind == "constant":
        return ConstantJumps(d["size"])
    atoms = d["atoms"]
    return EmpiricalJumps(tuple(a[0] for a in atoms), tuple(a[1] for a in atoms))


def _factor(d):
    if d["kind"] == "gamma_subordinator":
        return GammaSubordinator(d["shape_rate"], d["scale_rate"])
    if "jumps" in d:
        return CompoundPoisson(d["intensity"], jumps=_jump_law(d["jumps"]))
    return CompoundPoisson(d["intensity"], component_jumps=tuple(_jump_law(x) for x in d["component_jumps"]))


def _deformation(d):
    if d is None:
        return None
    phi = d.get("covariate_scales")
    phi = tuple(phi) if phi is not None else None
    if d["kind"] == "identity":
        return TimeDeformation("identity", covariate_scales=phi)
    if d["kind"] == "power":
        return TimeDeformation("power", exponent=d["exponent"], scale=d["scale"], covariate_scales=phi)
    return TimeDeformation("piecewise_linear", knots=tuple(tuple(k) for k in d["knots"]), covariate_scales=phi)


def _continuous(d):
    kind = d["kind"]
    if kind == "zero":
        return ContinuousHazard("zero")
    if kind == "linear":
        return ContinuousHazard("linear", rate=d["rate"])
    if kind == "power":
        return ContinuousHazard("power", scale=d["scale"], exponent=d["exponent"])
    return ContinuousHazard("piecewise_linear", knots=tuple(tuple(k) for k in d["knots"]))


def _check_rows(doc, key, n):
    rows = doc.get(key, [])
    if len(rows) != n:
        raise ModelValidationError(f"{key} has {len(rows)} rows for {n} components")


def _factor_model(doc):
    n = doc["components"]
    factors = tuple(_factor(f) for f in doc["factors"])
    _check_rows(doc, "loadings", n)
    for i, row in enumerate(doc["loadings"]):
        if len(row) != len(factors):
            raise ModelValidationError(f"loadings row {i + 1} has {len(row)} entries for {len(factors)} factors")
    return FactorModel(factors, doc["loadings"], _deformation(doc.get("deformation")))


def build_model(doc):
    """Turn a schema-valid document into a model object."""
    kind = doc["model_type"]
    n = doc["components"]
    if kind == "factor":
        return _factor_model(doc)
    if kind == "shot_noise":
        if len(doc["kernels"]) != n:
            raise ModelValidationError(f"kernels has {len(doc['kernels'])} entries for {n} components")
        it = doc["intensity"]
        if it["kind"] == "constant":
            intensity = ShotIntensity("constant", rate=it["rate"])
        else:
            intensity = ShotIntensity("piecewise_constant", breakpoints=tuple(it["breakpoints"]), rates=tuple(it["rates"]))
        kernels = []
        for k in doc["kernels"]:
            if k["kind"] == "constant":
                kernels.append(Kernel.constant(k["level"]))
            elif k["kind"] == "exponential_decay":
                kernels.append(Kernel.exponential_decay(k["g0"], k["decay"]))
            else:
                kernels.append(Kernel.linear_ramp(k["slope"], k["cap"], k.get("g0", 0.0)))
        return ShotNoiseModel(tuple(kernels), intensity, _jump_law(doc["marks"]))
    parts = tuple(_continuous(c) for c in doc["continuous_part"])
    if len(parts) != n:
        raise ModelValidationError(f"continuous_part has {len(parts)} entries for {n} components")
    jump = _factor_model(doc) if doc.get("factors") else None
    if jump is None and (doc.get("loadings") or doc.get("deformation")):
        raise ModelValidationError("loadings/deformation given without factors")
    return MinDecomposition(jump, parts)


def _normalize(x):
    if isinstance(x, bool) or x is None or isinstance(x, str):
        return x
    if isinstance(x, (int, float)):
        return float(x)
    if isinstance(x, dict):
        return {k: _normalize(v) for k, v in x.items()}
    return [_normalize(v) for v in x]


def canonical_json(doc) -> str:
    """Sorted keys, no whitespace, every number written as a float."""
    return json.dumps(_normalize(doc), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def model_hash(doc) -> str:
    return hashlib.sha256(canonical_json(doc).encode("utf-8")).hexdigest()


def load_document(doc, lenient: bool = False) -> LoadedSpec:
    doc, notes = validate_document(doc, lenient)
    return LoadedSpec(doc, build_model(doc), model_hash(doc), tuple(notes))


def load_spec(path, lenient: bool = False) -> LoadedSpec:
    """Read, validate and build a spec file (UTF-8 JSON)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelValidationError(f"cannot read spec file {path}: {exc.strerror or exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelValidationError(f"spec file {path} is not valid JSON: {exc}") from None
    return load_document(doc, lenient)
