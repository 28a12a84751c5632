"""Exact entropy and mutual information over finite, weighted sample spaces.

Everything is in bits. A :class:`RandomVariable` is a total map from the
points of a :class:`SampleSpace` to hashable symbols; its distribution is the
push-forward of the point weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np

from .errors import DomainError, MappingError, NumericError, StructuralError

MASS_TOL = 1e-12
INFO_TOL = 1e-9


def _plain(symbol: Any) -> Hashable:
    """Turn numpy scalars/arrays and lists into hashable builtin symbols."""
    if isinstance(symbol, np.generic):
        return symbol.item()
    if isinstance(symbol, (np.ndarray, list)):
        return tuple(_plain(s) for s in symbol)
    if isinstance(symbol, tuple):
        return tuple(_plain(s) for s in symbol)
    return symbol


def canonical_order(symbols: Iterable[Hashable]) -> tuple:
    """Distinct symbols in sorted order, or first-appearance order if unorderable."""
    seen = list(dict.fromkeys(symbols))
    try:
        return tuple(sorted(seen))
    except TypeError:
        return tuple(seen)


class SampleSpace:
    """Finite set of distinct input vectors, each with a probability weight."""

    def __init__(self, points: Sequence[Sequence[float]], weights: Sequence[float] | None = None):
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise StructuralError("sample space needs a nonempty list of equal-length vectors")
        if not np.all(np.isfinite(pts)):
            raise NumericError("sample points must be finite")
        if weights is None:
            w = np.full(pts.shape[0], 1.0 / pts.shape[0])
        else:
            w = np.asarray(weights, dtype=float)
        if w.shape != (pts.shape[0],):
            raise StructuralError(f"expected {pts.shape[0]} weights, got shape {w.shape}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > MASS_TOL:
            raise DomainError(f"weights sum to {w.sum()!r}, not 1")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise StructuralError("sample points must be pairwise distinct")
        pts.setflags(write=False)
        w.setflags(write=False)
        self.points = pts
        self.weights = w

    @classmethod
    def grid(cls, ranges: Sequence[tuple[float, float]], steps: Sequence[int]) -> "SampleSpace":
        """Uniform weights on a rectangular grid; ``steps[k]`` points along axis k."""
        if len(ranges) != len(steps):
            raise StructuralError("ranges and steps must have equal length")
        axes = [np.linspace(lo, hi, int(n)) for (lo, hi), n in zip(ranges, steps)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        return cls(pts)

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def same_as(self, other: "SampleSpace") -> bool:
        return self is other or (
            self.points.shape == other.points.shape
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )

    def __repr__(self) -> str:
        return f"SampleSpace(size={self.size}, dim={self.dim})"


@dataclass(frozen=True, eq=False)
class RandomVariable:
    """Discrete random variable: ``codes[k]`` indexes ``symbols`` at point k."""

    space: SampleSpace
    codes: np.ndarray
    symbols: tuple

    @classmethod
    def from_values(cls, space: SampleSpace, values: Sequence[Any]) -> "RandomVariable":
        vals = [_plain(v) for v in values]
        if len(vals) != space.size:
            raise StructuralError(f"need one value per sample point ({space.size}), got {len(vals)}")
        symbols = canonical_order(vals)
        index = {s: k for k, s in enumerate(symbols)}
        codes = np.fromiter((index[v] for v in vals), dtype=np.int64, count=len(vals))
        codes.setflags(write=False)
        return cls(space, codes, symbols)

    @property
    def arity(self) -> int:
        return len(self.symbols)

    @property
    def values(self) -> list:
        return [self.symbols[c] for c in self.codes]

    def pmf(self) -> np.ndarray:
        """Probability of each symbol, in canonical symbol order."""
        return np.bincount(self.codes, weights=self.space.weights, minlength=self.arity)

    def same_partition(self, other: "RandomVariable") -> bool:
        """True when both induce the same labelling of points up to renaming."""
        if not self.space.same_as(other.space) or self.arity != other.arity:
            return False
        return joint(self, other).arity == self.arity

    def __repr__(self) -> str:
        return f"RandomVariable(arity={self.arity}, n={self.space.size})"


@dataclass(frozen=True, eq=False)
class JointTable:
    """Joint pmf of two RVs; rows index ``x.symbols``, columns ``y.symbols``."""

    probs: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray
    row_symbols: tuple
    col_symbols: tuple


def _check_same_space(*rvs: RandomVariable) -> None:
    first = rvs[0].space
    for rv in rvs[1:]:
        if not first.same_as(rv.space):
            raise StructuralError("random variables live on different sample spaces")


def _entropy_of_pmf(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


def binary_entropy(p: float) -> float:
    """H(p) in bits with 0 log 0 = 0."""
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"binary_entropy needs p in [0, 1], got {p!r}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def joint(*rvs: RandomVariable) -> RandomVariable:
    """The tuple-valued RV (X1, ..., Xk); symbols are tuples of component symbols."""
    if not rvs:
        raise StructuralError("joint() needs at least one random variable")
    _check_same_space(*rvs)
    stacked = np.stack([rv.codes for rv in rvs], axis=1)
    uniq, inverse = np.unique(stacked, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    symbols = tuple(tuple(rv.symbols[c] for rv, c in zip(rvs, row)) for row in uniq)
    inverse = inverse.astype(np.int64)
    inverse.setflags(write=False)
    return RandomVariable(rvs[0].space, inverse, symbols)


def entropy(x: RandomVariable) -> float:
    """Shannon entropy H(X) in bits."""
    return _entropy_of_pmf(x.pmf())


def joint_entropy(*rvs: RandomVariable) -> float:
    return entropy(joint(*rvs))


def conditional_entropy(x: RandomVariable, given: RandomVariable) -> float:
    """H(X|Y) = H(X,Y) - H(Y)."""
    return joint_entropy(x, given) - entropy(given)


def _clamp(value: float, what: str) -> float:
    if value >= 0.0:
        return value
    if value >= -INFO_TOL:
        return 0.0
    raise NumericError(f"{what} came out negative ({value!r}) beyond roundoff allowance")


def mutual_information(x: RandomVariable, y: RandomVariable) -> float:
    """I(X;Y) = H(X) + H(Y) - H(X,Y), clamped at 0 within 1e-9."""
    _check_same_space(x, y)
    return _clamp(entropy(x) + entropy(y) - joint_entropy(x, y), "I(X;Y)")


def conditional_mutual_information(x: RandomVariable, y: RandomVariable, z: RandomVariable) -> float:
    """I(X;Y|Z) = H(X,Z) + H(Y,Z) - H(X,Y,Z) - H(Z)."""
    _check_same_space(x, y, z)
    value = joint_entropy(x, z) + joint_entropy(y, z) - joint_entropy(x, y, z) - entropy(z)
    return _clamp(value, "I(X;Y|Z)")


def joint_table(x: RandomVariable, y: RandomVariable) -> JointTable:
    _check_same_space(x, y)
    probs = np.zeros((x.arity, y.arity))
    np.add.at(probs, (x.codes, y.codes), x.space.weights)
    return JointTable(
        probs=probs,
        row_marginal=probs.sum(axis=1),
        col_marginal=probs.sum(axis=0),
        row_symbols=x.symbols,
        col_symbols=y.symbols,
    )


def compose_rv(f: Callable[[Any], Any] | Mapping[Any, Any], x: RandomVariable) -> RandomVariable:
    """The RV f(X), relabelling each symbol of X through ``f`` (callable or mapping)."""
    image = {}
    for s in x.symbols:
        try:
            image[s] = f[s] if isinstance(f, Mapping) else f(s)
        except (KeyError, IndexError) as exc:
            raise MappingError(f"map undefined on symbol {s!r}") from exc
    return RandomVariable.from_values(x.space, [image[x.symbols[c]] for c in x.codes])


def snap_cells(vectors: np.ndarray, resolution: float) -> np.ndarray:
    """Integer lattice cell of every entry: the largest c with c*resolution <= v.

    The float product check makes re-snapping ``c*resolution`` return ``c``
    again, so quantization is idempotent despite roundoff in ``v/resolution``.
    """
    v = np.asarray(vectors, dtype=float)
    if not np.all(np.isfinite(v)):
        raise NumericError("cannot quantize non-finite values")
    if not (resolution > 0 and math.isfinite(resolution)):
        raise DomainError(f"resolution must be a positive real, got {resolution!r}")
    cells = np.floor(v / resolution)
    cells = np.where(cells * resolution > v, cells - 1, cells)
    cells = np.where((cells + 1) * resolution <= v, cells + 1, cells)
    return cells.astype(np.int64)


def quantize(space: SampleSpace, vectors: Sequence[Sequence[float]], resolution: float) -> RandomVariable:
    """Discretize one real vector per point onto a cubic lattice of side ``resolution``.

    Symbols are tuples of integer cell indices, ordered lexicographically.
    """
    v = np.asarray(vectors, dtype=float)
    if v.ndim == 1:
        v = v.reshape(-1, 1)
    if v.shape[0] != space.size:
        raise StructuralError(f"need one vector per sample point ({space.size}), got {v.shape[0]}")
    cells = snap_cells(v, resolution)
    return RandomVariable.from_values(space, [tuple(row) for row in cells.tolist()])
