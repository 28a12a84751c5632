"""Layered models p_k o ... o p_1 with optional argmax head.

Layer indices are 1-based as in ``f_i = p_i o ... o p_1``; index 0 denotes the
raw input. Norms are L2 for vectors and Frobenius for Jacobians.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .errors import CapabilityError, DegenerateDomainError, StructuralError
from .prob_core import RandomVariable, SampleSpace

FD_STEP = 1e-5
FD_RTOL = 1e-4
FD_ATOL = 1e-8


class Layer:
    """A map R^in_dim -> R^out_dim; subclasses without a Jacobian return None."""

    kind = "layer"
    in_dim: int
    out_dim: int

    def eval(self, u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, u: np.ndarray) -> np.ndarray | None:
        return None

    @property
    def has_jacobian(self) -> bool:
        return True

    def to_dict(self) -> dict:
        return {"kind": self.kind}


class AffineLayer(Layer):
    kind = "affine"

    def __init__(self, matrix: Sequence[Sequence[float]], offset: Sequence[float] | None = None):
        self.matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        self.out_dim, self.in_dim = self.matrix.shape
        self.offset = np.zeros(self.out_dim) if offset is None else np.asarray(offset, dtype=float)
        if self.offset.shape != (self.out_dim,):
            raise StructuralError(f"affine offset must have length {self.out_dim}")

    def eval(self, u):
        return self.matrix @ u + self.offset

    def jacobian(self, u):
        return self.matrix.copy()

    def to_dict(self):
        return {"kind": self.kind, "matrix": self.matrix.tolist(), "offset": self.offset.tolist()}


class _Elementwise(Layer):
    def __init__(self, dim: int):
        self.in_dim = self.out_dim = int(dim)

    def to_dict(self):
        return {"kind": self.kind, "dim": self.in_dim}


class TanhLayer(_Elementwise):
    kind = "tanh"

    def eval(self, u):
        return np.tanh(u)

    def jacobian(self, u):
        return np.diag(1.0 - np.tanh(u) ** 2)


class SoftplusLayer(_Elementwise):
    kind = "softplus"

    def eval(self, u):
        return np.logaddexp(0.0, u)

    def jacobian(self, u):
        # sigmoid, written to avoid overflow for large |u|
        return np.diag(np.exp(-np.logaddexp(0.0, -u)))


class ScaleLayer(_Elementwise):
    """u -> factor * u, with a scalar or per-coordinate factor."""

    kind = "scale"

    def __init__(self, dim: int, factor: float | Sequence[float]):
        super().__init__(dim)
        f = np.asarray(factor, dtype=float)
        self.factor = np.full(self.in_dim, float(f)) if f.ndim == 0 else f
        if self.factor.shape != (self.in_dim,):
            raise StructuralError(f"scale factor must be a scalar or have length {self.in_dim}")

    def eval(self, u):
        return self.factor * u

    def jacobian(self, u):
        return np.diag(self.factor)

    def to_dict(self):
        return {"kind": self.kind, "dim": self.in_dim, "factor": self.factor.tolist()}


class TabulatedLayer(Layer):
    """Explicit outputs for a finite set of inputs; no Jacobian."""

    kind = "tabulated"

    def __init__(self, inputs: Sequence[Sequence[float]], outputs: Sequence[Sequence[float]]):
        ins = np.atleast_2d(np.asarray(inputs, dtype=float))
        outs = np.asarray(outputs, dtype=float)
        if outs.ndim == 1:
            outs = outs.reshape(-1, 1)
        if ins.shape[0] != outs.shape[0]:
            raise StructuralError("tabulated layer needs one output per input")
        self.in_dim, self.out_dim = ins.shape[1], outs.shape[1]
        self.table: dict[tuple, np.ndarray] = {}
        for a, b in zip(ins, outs):
            key = tuple(a.tolist())
            if key in self.table and not np.array_equal(self.table[key], b):
                raise StructuralError(f"tabulated layer maps input {key} to two outputs")
            self.table[key] = b

    def eval(self, u):
        try:
            return self.table[tuple(np.asarray(u, dtype=float).tolist())].copy()
        except KeyError:
            raise StructuralError(f"tabulated layer has no entry for input {tuple(u)}") from None

    @property
    def has_jacobian(self):
        return False

    def to_dict(self):
        return {
            "kind": self.kind,
            "inputs": [list(k) for k in self.table],
            "outputs": [v.tolist() for v in self.table.values()],
        }


@dataclass(frozen=True, eq=False)
class ArgmaxHead:
    """h(x) = label of argmax_i m_i . p(x), ties toward the smallest index."""

    class_vectors: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.class_vectors, dtype=float))
        object.__setattr__(self, "class_vectors", m)
        labels = tuple(self.labels) if self.labels else tuple(range(1, m.shape[0] + 1))
        if len(labels) != m.shape[0] or len(set(labels)) != len(labels):
            raise StructuralError("head needs one distinct label per class vector")
        object.__setattr__(self, "labels", labels)

    @property
    def n_classes(self) -> int:
        return self.class_vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.class_vectors.shape[1]

    def class_index(self, label: Any) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise StructuralError(f"unknown label {label!r}") from None

    def decide(self, rep: np.ndarray) -> Any:
        return self.labels[int(np.argmax(self.class_vectors @ rep))]

    def min_separation(self) -> float:
        if self.n_classes < 2:
            return float("inf")
        return float(pdist(self.class_vectors).min())

    def to_dict(self) -> dict:
        return {"vectors": self.class_vectors.tolist(), "labels": list(self.labels)}


@dataclass(frozen=True, eq=False)
class LayeredModel:
    layers: tuple
    head: ArgmaxHead | None = None

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise StructuralError("a model needs at least one layer")
        for r in range(1, len(layers)):
            if layers[r - 1].out_dim != layers[r].in_dim:
                raise StructuralError(
                    f"layer {r} outputs {layers[r - 1].out_dim} values but layer {r + 1} expects {layers[r].in_dim}"
                )
        if self.head is not None and self.head.dim != layers[-1].out_dim:
            raise StructuralError(f"head vectors have length {self.head.dim}, final layer outputs {layers[-1].out_dim}")
        object.__setattr__(self, "layers", layers)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    def _check_index(self, i: int, lo: int = 0) -> None:
        if not (lo <= i <= self.depth):
            raise StructuralError(f"layer index {i} outside [{lo}, {self.depth}]")

    def _input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.input_dim:
            raise StructuralError(f"input has length {x.shape[0]}, model expects {self.input_dim}")
        return x

    def representation_at(self, i: int, x) -> np.ndarray:
        """f_i(x); i=0 returns x itself."""
        self._check_index(i)
        u = self._input(x)
        for layer in self.layers[:i]:
            u = layer.eval(u)
        return u

    def pre_head(self, x) -> np.ndarray:
        return self.representation_at(self.depth, x)

    def forward(self, x) -> Any:
        """Label when a head is attached, otherwise the final layer output."""
        rep = self.pre_head(x)
        return rep if self.head is None else self.head.decide(rep)

    def label_of(self, x) -> Any:
        """h(x) as a hashable value (a tuple when there is no head)."""
        out = self.forward(x)
        return tuple(out.tolist()) if self.head is None else out

    def jacobian_between(self, i: int, j: int, x) -> np.ndarray:
        """Jacobian of p_j o ... o p_{i+1} evaluated at f_i(x); identity when i == j."""
        self._check_index(i)
        self._check_index(j)
        if i > j:
            raise StructuralError("jacobian_between needs i <= j")
        u = self.representation_at(i, x)
        dim = u.shape[0]
        J = np.eye(dim)
        for r in range(i, j):
            layer = self.layers[r]
            if not layer.has_jacobian:
                raise CapabilityError(f"layer {r + 1} ({layer.kind}) provides no Jacobian")
            J = layer.jacobian(u) @ J
            u = layer.eval(u)
        return J

    def prefix_jacobian(self, i: int, x) -> np.ndarray:
        """d f_i / dx by the chain rule."""
        self._check_index(i, lo=1)
        return self.jacobian_between(0, i, x)

    def realized(self, i: int, space: SampleSpace) -> np.ndarray:
        """f_i evaluated on every sample point, one row per point."""
        return np.array([self.representation_at(i, x) for x in space.points])

    def labels_rv(self, space: SampleSpace) -> RandomVariable:
        return RandomVariable.from_values(space, [self.label_of(x) for x in space.points])

    def to_dict(self) -> dict:
        out: dict = {"layers": [layer.to_dict() for layer in self.layers]}
        if self.head is not None:
            out["head"] = self.head.to_dict()
        return out


def numerical_jacobian(fn: Callable[[np.ndarray], np.ndarray], x, step: float = FD_STEP) -> np.ndarray:
    """Central finite differences, one column per input coordinate."""
    x = np.asarray(x, dtype=float).reshape(-1)
    cols = []
    for k in range(x.shape[0]):
        e = np.zeros_like(x)
        e[k] = step
        cols.append((np.atleast_1d(fn(x + e)) - np.atleast_1d(fn(x - e))) / (2.0 * step))
    return np.stack(cols, axis=1)


def jacobians_agree(analytic: np.ndarray, numeric: np.ndarray, rtol: float = FD_RTOL) -> bool:
    """Frobenius-relative agreement with a small absolute floor for near-zero Jacobians."""
    analytic = np.atleast_2d(analytic)
    numeric = np.atleast_2d(numeric)
    if analytic.shape != numeric.shape:
        return False
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    return bool(np.linalg.norm(analytic - numeric) <= rtol * scale + FD_ATOL)


@dataclass
class JacobianCheck:
    passed: bool
    worst_relative_error: float
    checked: int
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_relative_error": self.worst_relative_error,
            "checked": self.checked,
            "failures": self.failures,
        }


def check_jacobians(model: LayeredModel, space: SampleSpace) -> JacobianCheck:
    """Compare every layer Jacobian and every prefix Jacobian to finite differences on all points."""
    worst = 0.0
    checked = 0
    failures = []
    last = 0
    for r, layer in enumerate(model.layers, start=1):
        if not layer.has_jacobian:
            break
        last = r
    for k, x in enumerate(space.points):
        for r in range(1, last + 1):
            layer = model.layers[r - 1]
            u = model.representation_at(r - 1, x)
            pairs = [
                (f"layer {r}", layer.jacobian(u), numerical_jacobian(layer.eval, u)),
                (f"prefix {r}", model.prefix_jacobian(r, x), numerical_jacobian(lambda z: model.representation_at(r, z), x)),
            ]
            for what, a, n in pairs:
                checked += 1
                scale = max(np.linalg.norm(a), np.linalg.norm(n), 1e-300)
                worst = max(worst, float(np.linalg.norm(a - n) / scale))
                if not jacobians_agree(a, n):
                    failures.append({"point": k, "what": what})
    return JacobianCheck(not failures, worst, checked, failures)


@dataclass
class LipschitzEstimate:
    layer_indices: list
    constants: list
    product: float

    def to_dict(self) -> dict:
        return {"layers": self.layer_indices, "constants": self.constants, "product": self.product}


# input pairs closer than this are roundoff twins (e.g. saturated tanh) and
# are covered by the additive slack instead of the ratio
PAIR_FLOOR = 1e-12


def pairwise_ratio_max(inputs: np.ndarray, outputs: np.ndarray) -> float:
    """max ||out_a - out_b|| / ||in_a - in_b|| over pairs with inputs farther apart than 1e-12."""
    inputs = np.asarray(inputs, dtype=float)
    outputs = np.asarray(outputs, dtype=float).reshape(inputs.shape[0], -1)
    d_in = pdist(inputs)
    d_out = pdist(outputs)
    keep = d_in > PAIR_FLOOR
    if not keep.any():
        raise DegenerateDomainError("fewer than two distinct inputs; Lipschitz constant undefined")
    return float(np.max(d_out[keep] / d_in[keep]))


def lipschitz_estimate(model: LayeredModel, i: int, j: int, space: SampleSpace) -> LipschitzEstimate:
    """Exact Lipschitz constant of each layer r in (i, j] on its realized inputs, and their product."""
    model._check_index(i)
    model._check_index(j)
    if not i < j:
        raise StructuralError(f"lipschitz_estimate needs i < j, got i={i}, j={j}")
    reps = model.realized(i, space)
    constants = []
    for r in range(i, j):
        layer = model.layers[r]
        outs = np.array([layer.eval(u) for u in reps])
        constants.append(pairwise_ratio_max(reps, outs))
        reps = outs
    return LipschitzEstimate(list(range(i + 1, j + 1)), constants, float(np.prod(constants)))


@dataclass
class MarginReport:
    passed: bool
    delta: float
    min_norm: float
    min_separation: float
    argmin_point: int

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "delta": self.delta,
            "min_norm": self.min_norm,
            "min_separation": self.min_separation,
            "argmin_point": self.argmin_point,
        }


def margin_check(model: LayeredModel, space: SampleSpace, delta: float) -> MarginReport:
    """min_x ||p(x)|| >= delta and distinct class vectors."""
    if model.head is None:
        raise StructuralError("margin_check needs a model with an argmax head")
    norms = np.linalg.norm(model.realized(model.depth, space), axis=1)
    k = int(np.argmin(norms))
    sep = model.head.min_separation()
    passed = bool(norms[k] >= delta and sep > 0)
    return MarginReport(passed, float(delta), float(norms[k]), sep, k)
