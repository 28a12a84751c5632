"""Pinned and seeded instances used by the verify suites, bundled scenarios and tests."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .ef_kit import ExplanationFunction, tabulated_ef
from .model_graph import AffineLayer, ArgmaxHead, LayeredModel, ScaleLayer, TanhLayer
from .prob_core import RandomVariable, SampleSpace


@dataclass
class Fixture:
    space: SampleSpace
    model: LayeredModel
    efs: dict
    delta: float | None = None


def xor_bits() -> Fixture:
    """Three uniform bits (a, b, u); g1 = 2a+u, g2 = 2b+u, h = 2u-1."""
    pts = np.array(list(itertools.product([0, 1], repeat=3)), dtype=float)
    space = SampleSpace(pts)
    # p(x) = (1-u, u) so head (1,0)/(0,1) yields label -1 iff u = 0
    model = LayeredModel(
        (AffineLayer([[0, 0, -1], [0, 0, 1]], [1, 0]),),
        ArgmaxHead(np.eye(2), (-1, 1)),
    )
    a, b, u = pts[:, 0], pts[:, 1], pts[:, 2]
    efs = {
        "g1": tabulated_ef(space, (2 * a + u)[:, None], name="g1"),
        "g2": tabulated_ef(space, (2 * b + u)[:, None], name="g2"),
    }
    return Fixture(space, model, efs)


def two_bit_square() -> Fixture:
    """X = {0,1}^2 uniform, h = 2*x1 - 1, g = x1 (and x2 as a second EF)."""
    pts = np.array(list(itertools.product([0, 1], repeat=2)), dtype=float)
    space = SampleSpace(pts)
    model = LayeredModel(
        (AffineLayer([[-1, 0], [1, 0]], [1, 0]),),
        ArgmaxHead(np.eye(2), (-1, 1)),
    )
    efs = {
        "x1": tabulated_ef(space, pts[:, :1], name="x1"),
        "x2": tabulated_ef(space, pts[:, 1:], name="x2"),
    }
    return Fixture(space, model, efs)


def shifted_identity(steps: int = 20) -> Fixture:
    """p(x) = x + (3, 0) on a steps x steps grid over [-1, 1]^2, heads e1/e2, delta 1."""
    space = SampleSpace.grid([(-1, 1), (-1, 1)], [steps, steps])
    model = LayeredModel((AffineLayer(np.eye(2), [3, 0]),), ArgmaxHead(np.eye(2)))
    return Fixture(space, model, {}, delta=1.0)


def tanh_hidden(steps: int = 20) -> Fixture:
    """affine -> tanh -> affine on the same grid, label = sign of a steep tanh unit.

    The steep unit puts a gap in representation space between the two label
    regions, wider than the stability threshold at delta = 2.
    """
    space = SampleSpace.grid([(-1, 1), (-1, 1)], [steps, steps])
    model = LayeredModel(
        (
            AffineLayer([[30.0, 0.0], [0.0, 1.0]], [0.0, 0.0]),
            TanhLayer(2),
            AffineLayer([[1.0, 0.5], [-1.0, 0.5]], [2.0, 2.0]),
        ),
        ArgmaxHead(np.eye(2)),
    )
    return Fixture(space, model, {}, delta=2.0)


def soft_tanh_boundary(steps: int = 20) -> Fixture:
    """Gentle tanh model whose decision boundary cuts the grid with no gap in f.

    Neighbouring grid points on either side of the boundary have nearly equal
    representations yet different labels, so label stability below the
    margin-derived threshold fails even though |p(x)| stays well above delta.
    """
    space = SampleSpace.grid([(-1, 1), (-1, 1)], [steps, steps])
    w1 = np.array([[1.5, -0.5], [0.4, 1.2], [-0.8, 0.9]])
    b1 = np.array([0.1, -0.2, 0.3])
    w2 = np.array([[1.0, 0.6, -0.4], [-0.3, 0.8, 1.1]])
    model = LayeredModel(
        (AffineLayer(w1, b1), TanhLayer(3), AffineLayer(w2, [2.0, 2.0])),
        ArgmaxHead(np.eye(2)),
    )
    return Fixture(space, model, {}, delta=0.5)


def joint_space(probs: np.ndarray) -> tuple[SampleSpace, list[RandomVariable]]:
    """One sample point per cell of an n-way probability table; one RV per axis."""
    probs = np.asarray(probs, dtype=float)
    cells = list(itertools.product(*(range(n) for n in probs.shape)))
    space = SampleSpace(np.array(cells, dtype=float), probs.ravel() / probs.sum())
    rvs = [RandomVariable.from_values(space, [c[k] for c in cells]) for k in range(probs.ndim)]
    return space, rvs


def random_joint(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Uniform draw from the probability simplex over the cells of ``shape``."""
    return rng.dirichlet(np.ones(int(np.prod(shape)))).reshape(shape)


def random_joint_pair(rng: np.random.Generator, max_arity: int = 5, min_success: float | None = None):
    """(X, Y) with arities in [2, max_arity]; optionally redraw until MAP success >= min_success."""
    while True:
        shape = tuple(int(a) for a in rng.integers(2, max_arity + 1, size=2))
        probs = random_joint(rng, shape)
        if min_success is None or probs.max(axis=0).sum() >= min_success:
            _, (x, y) = joint_space(probs)
            return x, y


def random_layered_model(rng: np.random.Generator) -> tuple[LayeredModel, SampleSpace, ExplanationFunction]:
    """2-4 layers drawn from affine/tanh/scale on a grid of at most 100 points, random tabulated EF."""
    steps = int(rng.integers(4, 11))
    space = SampleSpace.grid([(-1, 1), (-1, 1)], [steps, steps])
    depth = int(rng.integers(2, 5))
    layers = []
    dim = 2
    for _ in range(depth):
        kind = rng.choice(["affine", "tanh", "scale"])
        if kind == "affine":
            out = int(rng.integers(1, 4))
            layers.append(AffineLayer(rng.normal(size=(out, dim)), rng.normal(size=out)))
            dim = out
        elif kind == "tanh":
            layers.append(TanhLayer(dim))
        else:
            layers.append(ScaleLayer(dim, rng.uniform(0.2, 3.0, size=dim)))
    model = LayeredModel(tuple(layers))
    g = tabulated_ef(space, rng.normal(size=(space.size, 2)), name="random")
    return model, space, g
