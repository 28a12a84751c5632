"""Scenario files: parsing, validation with field paths, and object construction.

A scenario is a JSON object::

    {
      "name": "...", "seed": 0,
      "space": {"points": [[...], ...], "weights": [...]}      # weights optional
             | {"grid": {"ranges": [[lo, hi], ...], "steps": [n, ...]}},
      "model": {"layers": [{"kind": "affine", "matrix": [[...]], "offset": [...]},
                           {"kind": "tanh"}, {"kind": "softplus"},
                           {"kind": "scale", "factor": 2.0},
                           {"kind": "tabulated", "outputs": [[...] per point]}],
                "head": {"vectors": [[...], ...], "labels": [...]},  # optional
                "delta": 1.0},                                      # optional
      "efs": {"name": {"kind": "gradient"}
                    | {"kind": "tabulated", "values": [[...] per point]}
                    | {"kind": "tabulated", "by_label": {"<label>": [[...] per point]}},
              ...},                                 # any EF may set "resolution"
      "analyses": [{"id": "...", "kind": "...", ...parameters}, ...]
    }

Reals may be given as JSON numbers or decimal strings.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .ef_kit import DEFAULT_RESOLUTION, ExplanationFunction, gradient_ef, tabulated_ef
from .errors import EfxError
from .model_graph import (
    AffineLayer,
    ArgmaxHead,
    LayeredModel,
    ScaleLayer,
    SoftplusLayer,
    TabulatedLayer,
    TanhLayer,
)
from .prob_core import SampleSpace


class ScenarioError(EfxError):
    """Invalid scenario input; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


# analysis kind -> (required params, optional params, is an assertion)
ANALYSES: dict[str, tuple[tuple, tuple, bool]] = {
    "entropy": (("rv",), (), False),
    "mutual_information": (("x", "y"), (), False),
    "fano_lower": (("x", "y"), (), True),
    "mi_stability": (("x", "y", "z"), (), True),
    "fano_converse": (("x", "y"), (), True),
    "lipschitz": (("from", "to"), (), False),
    "jacobian_check": ((), (), True),
    "margin_check": ((), ("delta",), True),
    "consistency_modulus": (("layer", "ef"), (), False),
    "explainability_modulus": (("layer", "ef"), (), False),
    "second_order_modulus": (("layer", "ef", "eps0", "eps1"), (), False),
    "consistency_propagation": (("ef", "i", "j"), (), True),
    "explainability_propagation": (("ef", "j", "i"), (), True),
    "gradient_explainability": ((), ("delta", "split"), True),
    "validity": (("ef",), ("epsilon0",), False),
    "completeness": (("ef", "epsilon"), ("codomain_size", "alpha", "candidates"), False),
    "valid_implies_complete": (("ef", "epsilon", "epsilon0"), ("codomain_size", "candidates"), True),
    "equivalence": (("layer", "ef", "beta", "gamma"), (), True),
    "gk_intersection": (("ef1", "ef2"), (), False),
    "verify_decomposition": (("ef1", "ef2", "epsilon"), ("decomposition",), True),
    "intersection_validity": (
        ("ef1", "ef2", "epsilon", "epsilon0", "alpha"),
        ("codomain_size", "decomposition", "candidates"),
        True,
    ),
    "union_inheritance": (
        ("ef1", "ef2", "epsilon0", "epsilon1", "alpha"),
        ("codomain_size", "decomposition", "candidates"),
        True,
    ),
    "intersection_uniqueness": (("ef1", "ef2", "epsilon"), ("decomposition_a", "decomposition_b"), True),
}

# analyses whose "validity"/"completeness" become assertions when a target is given
CONDITIONAL_ASSERTION = {"validity": "epsilon0", "completeness": "alpha"}


@dataclass
class Analysis:
    id: str
    kind: str
    params: dict
    path: str

    @property
    def is_assertion(self) -> bool:
        target = CONDITIONAL_ASSERTION.get(self.kind)
        return ANALYSES[self.kind][2] or (target is not None and target in self.params)


@dataclass
class Scenario:
    name: str
    seed: int
    space: SampleSpace
    model: LayeredModel
    efs: dict
    resolutions: dict
    delta: float | None
    analyses: list
    raw: dict = field(repr=False, default_factory=dict)


def _real(value: Any, path: str, positive: bool = False, allow_inf: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise ScenarioError(path, f"expected a real number, got {type(value).__name__}")
    try:
        x = float(value)
    except ValueError:
        raise ScenarioError(path, f"cannot parse {value!r} as a real number") from None
    if math.isnan(x) or (math.isinf(x) and not allow_inf):
        raise ScenarioError(path, f"{value!r} is not a finite real")
    if positive and not x > 0:
        raise ScenarioError(path, f"must be positive, got {value!r}")
    return x


def _int(value: Any, path: str, lo: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ScenarioError(path, f"expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ScenarioError(path, f"must be >= {lo}, got {value}")
    return value


def _matrix(value: Any, path: str) -> np.ndarray:
    if not isinstance(value, list) or not value:
        raise ScenarioError(path, "expected a nonempty list")
    rows = []
    width = None
    for r, row in enumerate(value):
        row = row if isinstance(row, list) else [row]
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ScenarioError(f"{path}[{r}]", f"row has length {len(row)}, expected {width}")
        rows.append([_real(v, f"{path}[{r}][{c}]") for c, v in enumerate(row)])
    return np.array(rows, dtype=float)


def _obj(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise ScenarioError(path, "expected an object")
    return value


def _build_space(spec: Any) -> SampleSpace:
    spec = _obj(spec, "space")
    try:
        if "grid" in spec:
            grid = _obj(spec["grid"], "space.grid")
            ranges = grid.get("ranges")
            steps = grid.get("steps")
            if not isinstance(ranges, list) or not isinstance(steps, list) or len(ranges) != len(steps):
                raise ScenarioError("space.grid", "needs equal-length 'ranges' and 'steps' lists")
            rs = []
            for k, r in enumerate(ranges):
                if not isinstance(r, list) or len(r) != 2:
                    raise ScenarioError(f"space.grid.ranges[{k}]", "expected [lo, hi]")
                rs.append((_real(r[0], f"space.grid.ranges[{k}][0]"), _real(r[1], f"space.grid.ranges[{k}][1]")))
            ns = [_int(n, f"space.grid.steps[{k}]", lo=1) for k, n in enumerate(steps)]
            return SampleSpace.grid(rs, ns)
        if "points" in spec:
            pts = _matrix(spec["points"], "space.points")
            w = spec.get("weights")
            weights = None if w is None else [_real(v, f"space.weights[{k}]") for k, v in enumerate(w)]
            return SampleSpace(pts, weights)
    except ScenarioError:
        raise
    except EfxError as exc:
        raise ScenarioError("space", str(exc)) from None
    raise ScenarioError("space", "needs either 'points' or 'grid'")


def _build_model(spec: Any, space: SampleSpace) -> tuple[LayeredModel, float | None]:
    spec = _obj(spec, "model")
    layers_spec = spec.get("layers")
    if not isinstance(layers_spec, list) or not layers_spec:
        raise ScenarioError("model.layers", "expected a nonempty list of layers")
    layers = []
    dim = space.dim
    reps = space.points.copy()
    for r, ls in enumerate(layers_spec):
        path = f"model.layers[{r}]"
        ls = _obj(ls, path)
        kind = ls.get("kind")
        try:
            if kind == "affine":
                offset = ls.get("offset")
                layer = AffineLayer(
                    _matrix(ls.get("matrix"), f"{path}.matrix"),
                    None if offset is None else [_real(v, f"{path}.offset[{k}]") for k, v in enumerate(offset)],
                )
            elif kind == "tanh":
                layer = TanhLayer(dim)
            elif kind == "softplus":
                layer = SoftplusLayer(dim)
            elif kind == "scale":
                f = ls.get("factor")
                factor = [_real(v, f"{path}.factor[{k}]") for k, v in enumerate(f)] if isinstance(f, list) else _real(
                    f, f"{path}.factor"
                )
                layer = ScaleLayer(dim, factor)
            elif kind == "tabulated":
                outs = _matrix(ls.get("outputs"), f"{path}.outputs")
                if outs.shape[0] != space.size:
                    raise ScenarioError(f"{path}.outputs", f"needs one row per sample point ({space.size})")
                layer = TabulatedLayer(reps, outs)
            else:
                raise ScenarioError(f"{path}.kind", f"unknown layer kind {kind!r}")
        except ScenarioError:
            raise
        except EfxError as exc:
            raise ScenarioError(path, str(exc)) from None
        if layer.in_dim != dim:
            raise ScenarioError(path, f"layer expects inputs of length {layer.in_dim}, receives {dim}")
        layers.append(layer)
        reps = np.array([layer.eval(u) for u in reps])
        dim = layer.out_dim
    head = None
    if "head" in spec:
        hs = _obj(spec["head"], "model.head")
        vectors = _matrix(hs.get("vectors"), "model.head.vectors")
        labels = hs.get("labels") or ()
        if labels and (not isinstance(labels, list) or any(isinstance(v, (list, dict)) for v in labels)):
            raise ScenarioError("model.head.labels", "expected a list of scalar labels")
        try:
            head = ArgmaxHead(vectors, tuple(labels))
        except EfxError as exc:
            raise ScenarioError("model.head", str(exc)) from None
    try:
        model = LayeredModel(tuple(layers), head)
    except EfxError as exc:
        raise ScenarioError("model", str(exc)) from None
    delta = _real(spec["delta"], "model.delta", positive=True) if "delta" in spec else None
    return model, delta


def _build_efs(spec: Any, space: SampleSpace, model: LayeredModel) -> tuple[dict, dict]:
    spec = _obj(spec if spec is not None else {}, "efs")
    efs: dict[str, ExplanationFunction] = {}
    resolutions = {}
    for name, es in spec.items():
        path = f"efs.{name}"
        es = _obj(es, path)
        kind = es.get("kind")
        resolutions[name] = _real(es.get("resolution", DEFAULT_RESOLUTION), f"{path}.resolution", positive=True)
        try:
            if kind == "gradient":
                efs[name] = gradient_ef(model, name)
            elif kind == "tabulated":
                values = es.get("values")
                by_label = es.get("by_label")
                if values is None and by_label is None:
                    raise ScenarioError(path, "tabulated EF needs 'values' or 'by_label'")
                tables = {}
                if by_label is not None:
                    labels = model.head.labels if model.head is not None else ()
                    for key, rows in _obj(by_label, f"{path}.by_label").items():
                        match = [lab for lab in labels if str(lab) == key]
                        if not match:
                            raise ScenarioError(f"{path}.by_label.{key}", "no head label with this name")
                        tables[match[0]] = _matrix(rows, f"{path}.by_label.{key}")
                efs[name] = tabulated_ef(
                    space, None if values is None else _matrix(values, f"{path}.values"), tables, name
                )
            else:
                raise ScenarioError(f"{path}.kind", f"unknown EF kind {kind!r}")
        except ScenarioError:
            raise
        except EfxError as exc:
            raise ScenarioError(path, str(exc)) from None
    return efs, resolutions


def _check_analysis(a: Any, k: int, efs: dict, model: LayeredModel) -> Analysis:
    path = f"analyses[{k}]"
    a = _obj(a, path)
    kind = a.get("kind")
    if kind not in ANALYSES:
        raise ScenarioError(f"{path}.kind", f"unknown analysis kind {kind!r}")
    required, optional, _ = ANALYSES[kind]
    params = {key: v for key, v in a.items() if key not in ("id", "kind")}
    for key in required:
        if key not in params:
            raise ScenarioError(f"{path}.{key}", "missing required parameter")
    extra = set(params) - set(required) - set(optional)
    if extra:
        raise ScenarioError(f"{path}.{sorted(extra)[0]}", f"unexpected parameter for {kind}")
    for key in ("ef", "ef1", "ef2"):
        if key in params and params[key] not in efs:
            raise ScenarioError(f"{path}.{key}", f"no EF named {params[key]!r}")
    for key in ("rv", "x", "y", "z"):
        if key in params and params[key] != "h" and params[key] not in efs:
            raise ScenarioError(f"{path}.{key}", f"{params[key]!r} is neither 'h' nor an EF name")
    for key in ("layer", "i", "j", "from", "to", "split"):
        if key in params:
            v = _int(params[key], f"{path}.{key}", lo=0)
            if v > model.depth:
                raise ScenarioError(f"{path}.{key}", f"layer index {v} exceeds model depth {model.depth}")
    for key in ("epsilon", "epsilon0", "epsilon1", "alpha"):
        if key in params:
            v = _real(params[key], f"{path}.{key}", allow_inf=True)
            if v < 0:
                raise ScenarioError(f"{path}.{key}", "must be nonnegative")
    if "delta" in params:
        _real(params["delta"], f"{path}.delta", positive=True)
    if "codomain_size" in params:
        _int(params["codomain_size"], f"{path}.codomain_size", lo=1)
    for key in ("eps0", "eps1"):
        if key in params:
            if not isinstance(params[key], list) or not params[key]:
                raise ScenarioError(f"{path}.{key}", "expected a nonempty list")
            for t, v in enumerate(params[key]):
                _real(v, f"{path}.{key}[{t}]", allow_inf=True)
    for key in ("beta", "gamma"):
        if key in params:
            _curve_spec(params[key], f"{path}.{key}")
    needs_head = kind in ("margin_check", "gradient_explainability", "validity", "completeness", "valid_implies_complete")
    if needs_head and model.head is None:
        raise ScenarioError(path, f"{kind} needs a model head")
    return Analysis(str(a.get("id", f"{kind}-{k}")), kind, params, path)


def _curve_spec(spec: Any, path: str):
    spec = _obj(spec, path)
    if "breakpoints" in spec:
        bps = spec["breakpoints"]
        if not isinstance(bps, list):
            raise ScenarioError(f"{path}.breakpoints", "expected a list of [epsilon, value]")
        return [(_real(b[0], f"{path}.breakpoints[{t}][0]"), _real(b[1], f"{path}.breakpoints[{t}][1]")) for t, b in enumerate(bps)]
    if "slope" in spec:
        return _real(spec["slope"], f"{path}.slope"), _real(spec.get("intercept", 0), f"{path}.intercept")
    raise ScenarioError(path, "curve needs 'breakpoints' or 'slope'")


def candidate_curve(spec: dict):
    """Callable eps -> value from a {'slope', 'intercept'} or {'breakpoints'} spec."""
    from .property_checkers import ModulusCurve

    parsed = _curve_spec(spec, "")
    if isinstance(parsed, list):
        return ModulusCurve(tuple(sorted(parsed)))
    slope, intercept = parsed
    return lambda eps: slope * eps + intercept


def parse_scenario(raw: dict) -> Scenario:
    raw = _obj(raw, "")
    for key in ("space", "model", "analyses"):
        if key not in raw:
            raise ScenarioError(key, "missing required section")
    space = _build_space(raw["space"])
    model, delta = _build_model(raw["model"], space)
    efs, resolutions = _build_efs(raw.get("efs"), space, model)
    if not isinstance(raw["analyses"], list):
        raise ScenarioError("analyses", "expected a list")
    analyses = [_check_analysis(a, k, efs, model) for k, a in enumerate(raw["analyses"])]
    ids = [a.id for a in analyses]
    dup = {i for i in ids if ids.count(i) > 1}
    if dup:
        raise ScenarioError("analyses", f"duplicate analysis ids {sorted(dup)}")
    seed = _int(raw.get("seed", 0), "seed")
    return Scenario(str(raw.get("name", "scenario")), seed, space, model, efs, resolutions, delta, analyses, raw)


def load_scenario(path: str | Path) -> Scenario:
    text = Path(path).read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"line {exc.lineno} column {exc.colno}", exc.msg) from None
    return parse_scenario(raw)
