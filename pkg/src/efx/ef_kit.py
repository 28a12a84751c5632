"""Explanation functions g(x, h(x)) with values in R^m under the L2 metric."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .errors import CapabilityError, StructuralError
from .model_graph import LayeredModel
from .prob_core import RandomVariable, SampleSpace, quantize

DEFAULT_RESOLUTION = 1e-6


@dataclass(frozen=True, eq=False)
class ExplanationFunction:
    fn: Callable[[np.ndarray, Any], Any]
    out_dim: int
    name: str = "g"

    def __call__(self, x, label) -> np.ndarray:
        v = np.asarray(self.fn(np.asarray(x, dtype=float), label), dtype=float).reshape(-1)
        if v.shape[0] != self.out_dim:
            raise StructuralError(f"EF {self.name} returned {v.shape[0]} values, declared {self.out_dim}")
        return v


def gradient_ef(model: LayeredModel, name: str = "gradient") -> ExplanationFunction:
    """g(x, y) = m_y^T dp/dx, flattened to length n."""
    if model.head is None:
        raise StructuralError("gradient EF needs a model with an argmax head")
    missing = [r + 1 for r, layer in enumerate(model.layers) if not layer.has_jacobian]
    if missing:
        raise CapabilityError(f"layers {missing} provide no Jacobian")
    head = model.head

    def fn(x, label):
        m = head.class_vectors[head.class_index(label)]
        return m @ model.prefix_jacobian(model.depth, x)

    return ExplanationFunction(fn, model.input_dim, name)


def tabulated_ef(
    space: SampleSpace,
    values: Sequence[Sequence[float]] | None = None,
    by_label: Mapping[Any, Sequence[Sequence[float]]] | None = None,
    name: str = "tabulated",
) -> ExplanationFunction:
    """EF given by an explicit vector per sample point.

    ``values`` ignores the label; ``by_label`` supplies one table per label and
    takes precedence when the label is present in it.
    """
    if values is None and not by_label:
        raise StructuralError("tabulated EF needs values or by_label tables")
    keys = [tuple(p.tolist()) for p in space.points]

    def _table(rows):
        arr = np.asarray(rows, dtype=float)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.shape[0] != space.size:
            raise StructuralError(f"tabulated EF {name} needs {space.size} rows, got {arr.shape[0]}")
        return dict(zip(keys, arr))

    plain = _table(values) if values is not None else None
    labelled = {lab: _table(rows) for lab, rows in (by_label or {}).items()}
    dims = {t[keys[0]].shape[0] for t in ([plain] if plain else []) + list(labelled.values())}
    if len(dims) != 1:
        raise StructuralError(f"tabulated EF {name} mixes output lengths {sorted(dims)}")

    def fn(x, label):
        key = tuple(x.tolist())
        table = labelled.get(label, plain)
        if table is None or key not in table:
            raise StructuralError(f"tabulated EF {name} undefined at ({key}, {label!r})")
        return table[key]

    return ExplanationFunction(fn, dims.pop(), name)


def ef_distance(g: ExplanationFunction, first: tuple, second: tuple) -> float:
    """|g(x1, y1) - g(x2, y2)| in L2."""
    a = g(*first)
    b = g(*second)
    if a.shape != b.shape:
        raise StructuralError("explanations have different lengths")
    return float(np.linalg.norm(a - b))


def ef_values(g: ExplanationFunction, model: LayeredModel, space: SampleSpace) -> np.ndarray:
    """g(x, h(x)) for every sample point, one row each."""
    return np.array([g(x, model.label_of(x)) for x in space.points]).reshape(space.size, g.out_dim)


def ef_as_rv(
    g: ExplanationFunction,
    model: LayeredModel,
    space: SampleSpace,
    resolution: float = DEFAULT_RESOLUTION,
) -> RandomVariable:
    """The quantized random variable g(x, h(x)) with x drawn from the space."""
    return quantize(space, ef_values(g, model, space), resolution)
