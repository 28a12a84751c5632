import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.distance import pdist

from efx import fixtures
from efx.errors import CapabilityError, DegenerateDomainError, StructuralError
from efx.model_graph import (
    AffineLayer,
    ArgmaxHead,
    LayeredModel,
    ScaleLayer,
    SoftplusLayer,
    TabulatedLayer,
    TanhLayer,
    check_jacobians,
    jacobians_agree,
    lipschitz_estimate,
    margin_check,
    numerical_jacobian,
    pairwise_ratio_max,
)
from efx.prob_core import SampleSpace


def small_net():
    return LayeredModel(
        (
            AffineLayer([[1.0, -2.0], [0.5, 0.3], [0.0, 1.0]], [0.1, 0.0, -0.2]),
            TanhLayer(3),
            SoftplusLayer(3),
            ScaleLayer(3, [2.0, 0.5, 1.0]),
            AffineLayer([[1.0, 0.0, 1.0], [0.0, 1.0, -1.0]], [0.0, 0.0]),
        ),
        ArgmaxHead(np.eye(2), ("neg", "pos")),
    )


def test_forward_by_hand():
    net = small_net()
    x = np.array([0.3, -0.7])
    a = np.array([[1.0, -2.0], [0.5, 0.3], [0.0, 1.0]]) @ x + [0.1, 0.0, -0.2]
    s = np.log1p(np.exp(np.tanh(a))) * [2.0, 0.5, 1.0]
    p = np.array([s[0] + s[2], s[1] - s[2]])
    assert np.allclose(net.pre_head(x), p)
    assert net.forward(x) == ("neg", "pos")[int(np.argmax(p))]
    assert np.array_equal(net.representation_at(0, x), x)


def test_dimension_chain_is_checked():
    with pytest.raises(StructuralError):
        LayeredModel((AffineLayer(np.ones((3, 2))), TanhLayer(2)))
    with pytest.raises(StructuralError):
        LayeredModel((AffineLayer(np.ones((3, 2))),), ArgmaxHead(np.eye(2)))
    with pytest.raises(StructuralError):
        LayeredModel(())


def test_head_label_validation_and_ties():
    with pytest.raises(StructuralError):
        ArgmaxHead(np.eye(2), ("a", "a"))
    head = ArgmaxHead(np.eye(2), ("a", "b"))
    assert head.decide(np.array([1.0, 1.0])) == "a"
    assert ArgmaxHead(np.eye(3)).labels == (1, 2, 3)


def test_label_without_head_is_tuple():
    net = LayeredModel((AffineLayer(np.eye(2)),))
    assert net.label_of([1.0, 2.0]) == (1.0, 2.0)


def test_tabulated_layer_lookup_and_no_jacobian():
    space = SampleSpace([[0.0], [1.0]])
    layer = TabulatedLayer(space.points, [[5.0], [7.0]])
    net = LayeredModel((layer, TanhLayer(1)))
    assert net.representation_at(1, [1.0])[0] == 7.0
    with pytest.raises(StructuralError):
        net.representation_at(1, [0.5])
    with pytest.raises(CapabilityError):
        net.prefix_jacobian(2, [0.0])
    with pytest.raises(StructuralError):
        TabulatedLayer([[0.0], [0.0]], [[1.0], [2.0]])
    assert check_jacobians(net, space).checked == 0


def test_jacobian_between_identity_and_order():
    net = small_net()
    assert np.array_equal(net.jacobian_between(2, 2, [0.1, 0.2]), np.eye(3))
    with pytest.raises(StructuralError):
        net.jacobian_between(3, 1, [0.1, 0.2])


def test_analytic_jacobians_match_finite_differences():
    net = small_net()
    space = SampleSpace.grid([(-1, 1), (-1, 1)], [6, 6])
    jc = check_jacobians(net, space)
    assert jc.passed, jc.failures[:3]
    assert jc.checked == 36 * 5 * 2
    assert jc.worst_relative_error < 1e-6


@given(st.integers(0, 10_000))
def test_prefix_jacobian_chain_rule(seed):
    model, space, _ = fixtures.random_layered_model(np.random.default_rng(seed))
    x = space.points[seed % space.size]
    for i in range(1, model.depth + 1):
        for k in range(i, model.depth + 1):
            lhs = model.prefix_jacobian(k, x)
            rhs = model.jacobian_between(i, k, x) @ model.prefix_jacobian(i, x)
            assert np.allclose(lhs, rhs, atol=1e-12)
        fd = numerical_jacobian(lambda z: model.representation_at(i, z), x)
        assert jacobians_agree(model.prefix_jacobian(i, x), fd)


def test_jacobians_agree_tolerances():
    a = np.array([[1.0, 2.0]])
    assert jacobians_agree(a, a * (1 + 5e-5))
    assert not jacobians_agree(a, a * (1 + 1e-3))
    assert jacobians_agree(np.zeros((2, 2)), np.full((2, 2), 1e-9))
    assert not jacobians_agree(np.zeros((2, 2)), np.zeros((2, 3)))


# --- Lipschitz ------------------------------------------------------------

def brute_ratio(ins, outs):
    best = 0.0
    for a in range(len(ins)):
        for b in range(a + 1, len(ins)):
            d = np.linalg.norm(ins[a] - ins[b])
            if d > 1e-12:
                best = max(best, np.linalg.norm(outs[a] - outs[b]) / d)
    return best


def test_pairwise_ratio_matches_loop(rng):
    ins = rng.normal(size=(15, 3))
    outs = np.tanh(ins @ rng.normal(size=(3, 2)))
    assert pairwise_ratio_max(ins, outs) == pytest.approx(brute_ratio(ins, outs), rel=1e-12)


def test_pairwise_ratio_degenerate():
    with pytest.raises(DegenerateDomainError):
        pairwise_ratio_max(np.zeros((3, 2)), np.ones((3, 1)))


@given(st.integers(0, 10_000))
def test_layer_constants_respect_analytic_bounds(seed):
    model, space, _ = fixtures.random_layered_model(np.random.default_rng(seed))
    est = lipschitz_estimate(model, 0, model.depth, space)
    assert est.layer_indices == list(range(1, model.depth + 1))
    reps = model.realized(0, space)
    for layer, c in zip(model.layers, est.constants):
        # difference quotients of near-duplicate inputs carry roundoff ~ eps |u| / d
        d = pdist(reps)
        slack = 8 * np.finfo(float).eps * (np.abs(reps).max() + 1) / d[d > 1e-12].min()
        reps = np.array([layer.eval(u) for u in reps])
        if isinstance(layer, AffineLayer):
            bound = np.linalg.norm(layer.matrix, 2)
        elif isinstance(layer, TanhLayer):
            bound = 1.0
        else:
            bound = float(np.max(np.abs(layer.factor)))
        assert c <= bound * (1 + slack + 1e-12)
    # realized end-to-end ratio never exceeds the product of layer constants
    reps = model.realized(model.depth, space)
    d_in, d_out = pdist(space.points), pdist(reps)
    assert np.max(d_out / d_in) <= est.product * (1 + 1e-9)


def test_lipschitz_index_validation():
    net = small_net()
    space = SampleSpace.grid([(-1, 1), (-1, 1)], [3, 3])
    with pytest.raises(StructuralError):
        lipschitz_estimate(net, 2, 2, space)
    with pytest.raises(StructuralError):
        lipschitz_estimate(net, 0, 9, space)


# --- margin -----------------------------------------------------------------

def test_margin_on_shifted_fixture():
    fx = fixtures.shifted_identity()
    m = margin_check(fx.model, fx.space, fx.delta)
    assert m.passed
    # nearest grid row to x2 = 0 sits at x2 = +-1/19 on a 20-point linspace
    assert m.min_norm == pytest.approx(np.hypot(2.0, 1 / 19), rel=1e-12)
    odd = fixtures.shifted_identity(steps=21)
    assert margin_check(odd.model, odd.space, 1.0).min_norm == 2.0
    assert m.min_separation == pytest.approx(np.sqrt(2))


def test_margin_fails_for_identical_head_vectors():
    fx = fixtures.shifted_identity(steps=4)
    model = LayeredModel(fx.model.layers, ArgmaxHead(np.array([[1.0, 0.0], [1.0, 0.0]])))
    m = margin_check(model, fx.space, 1.0)
    assert not m.passed and m.min_separation == 0.0


def test_margin_fails_below_delta():
    fx = fixtures.shifted_identity(steps=4)
    assert not margin_check(fx.model, fx.space, 2.5).passed


@given(st.floats(0.01, 100.0), st.integers(0, 50))
def test_argmax_invariant_to_positive_head_scaling(c, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(3, 4))
    rep = rng.normal(size=4)
    assert ArgmaxHead(m).decide(rep) == ArgmaxHead(c * m).decide(rep)
