import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from efx import fixtures
from efx.ef_algebra import (
    check_intersection_uniqueness,
    check_intersection_validity,
    check_union_inheritance,
    decomposition_from_values,
    gk_intersection,
    intersection_validity_bound,
    relabel,
    union_rv,
    verify_decomposition,
)
from efx.ef_kit import ef_as_rv
from efx.errors import StructuralError
from efx.prob_core import RandomVariable, SampleSpace, compose_rv, entropy, joint
from efx.property_checkers import FAIL, NOT_APPLICABLE, PASS

from conftest import joint_tables, rvs_of


def xor_rvs():
    fx = fixtures.xor_bits()
    g1 = ef_as_rv(fx.efs["g1"], fx.model, fx.space)
    g2 = ef_as_rv(fx.efs["g2"], fx.model, fx.space)
    return fx, g1, g2, fx.model.labels_rv(fx.space)


def bits(space, col):
    return RandomVariable.from_values(space, space.points[:, col].astype(int))


# --- common part --------------------------------------------------------------

def test_xor_common_part_is_parity():
    fx, g1, g2, h = xor_rvs()
    dec = gk_intersection(g1, g2)
    a, b, u = (bits(fx.space, k) for k in range(3))
    assert dec.u.arity == 2 and dec.u.same_partition(u)
    assert dec.e1.same_partition(a) and dec.e2.same_partition(b)
    assert dec.achieved_epsilon == 0.0
    assert verify_decomposition(dec, g1, g2, 0.0).passed


def test_equal_inputs_put_everything_in_u():
    s = SampleSpace(np.arange(5.0))
    g = RandomVariable.from_values(s, [0, 1, 2, 1, 0])
    dec = gk_intersection(g, g)
    assert dec.u.same_partition(g)
    assert dec.e1.arity == 1 and dec.e2.arity == 1
    assert dec.achieved_epsilon == 0.0
    assert union_rv(dec).same_partition(g)


def test_independent_inputs_give_constant_u():
    p = np.full((3, 2), 1 / 6)
    g1, g2 = rvs_of(p)
    dec = gk_intersection(g1, g2)
    assert dec.u.arity == 1
    assert dec.e1.same_partition(g1)
    assert dec.achieved_epsilon == 0.0
    assert union_rv(dec).same_partition(joint(g1, g2))


def test_different_spaces_rejected():
    a = RandomVariable.from_values(SampleSpace(np.arange(2.0)), [0, 1])
    b = RandomVariable.from_values(SampleSpace(np.arange(3.0)), [0, 1, 1])
    with pytest.raises(StructuralError):
        gk_intersection(a, b)


@given(joint_tables(ndim=2, max_arity=5))
def test_gk_invariants(p):
    g1, g2 = rvs_of(p)
    dec = gk_intersection(g1, g2)
    rep = verify_decomposition(dec, g1, g2, math.inf)
    assert rep.passed, rep.failures
    # u is a function of g1 alone and of g2 alone, pointwise
    for g in (g1, g2):
        seen = {}
        for gs, us in zip(g.values, dec.u.values):
            assert seen.setdefault(gs, us) == us
    h_union = entropy(union_rv(dec))
    assert h_union >= max(entropy(g1), entropy(g2)) - 1e-12


def test_constant_u_for_equal_nonconstant_fails_at_zero():
    s = SampleSpace(np.arange(4.0))
    g = RandomVariable.from_values(s, [0, 1, 2, 3])
    dec = decomposition_from_values(g, g, g.values, [0] * 4, g.values)
    rep = verify_decomposition(dec, g, g, 0.0)
    assert rep.status == FAIL
    assert rep.values["achieved_epsilon"] == pytest.approx(entropy(g))
    assert verify_decomposition(dec, g, g, math.inf).passed


def test_non_injective_tables_are_caught():
    s = SampleSpace(np.arange(4.0))
    g = RandomVariable.from_values(s, [0, 1, 2, 3])
    dec = decomposition_from_values(g, g, [0, 0, 1, 1], [0, 0, 0, 0], [0, 1, 2, 3])
    rep = verify_decomposition(dec, g, g, math.inf)
    assert rep.failed


def test_inconsistent_values_raise():
    s = SampleSpace(np.arange(2.0))
    g = RandomVariable.from_values(s, [0, 0])
    with pytest.raises(StructuralError):
        decomposition_from_values(g, g, [0, 1], [0, 0], [0, 0])


def test_union_of_xor_is_three_bits():
    _, g1, g2, _ = xor_rvs()
    union = union_rv(gk_intersection(g1, g2))
    assert union.arity == 8
    assert entropy(union) == pytest.approx(3.0, abs=1e-12)


# --- intersection validity -----------------------------------------------------

def test_intersection_validity_on_xor():
    _, g1, g2, h = xor_rvs()
    dec = gk_intersection(g1, g2)
    rep = check_intersection_validity(dec, g1, g2, h, 0.0, 0.01, 0.5)
    assert rep.status == PASS
    assert rep.values["epsilon1"] == pytest.approx(1 - 2 ** -1.21 / 0.5, abs=1e-12)
    assert rep.values["epsilon1"] == pytest.approx(0.135, abs=1e-3)
    assert rep.values["u_loss"] == 0.0


def test_bound_limit():
    assert intersection_validity_bound(0.0, 0.0, 1.0) == 0.5
    assert intersection_validity_bound(1e-12, 1e-12, 2.0) == pytest.approx(1 - 2**-2.0, abs=1e-5)


def test_incomplete_g2_is_not_applicable():
    _, g1, g2, h = xor_rvs()
    dec = gk_intersection(g1, g2)
    # at eps = 1 the parity itself is admissible for g2, so alpha_hat = 0 < 0.5
    rep = check_intersection_validity(dec, g1, g2, h, 1.0, 0.01, 0.5)
    assert rep.status == NOT_APPLICABLE


# --- union inheritance ------------------------------------------------------------

def test_union_inherits_on_xor():
    _, g1, g2, h = xor_rvs()
    rep = check_union_inheritance(gk_intersection(g1, g2), g1, g2, h, 0.01, 0.0, 0.5, 2)
    assert rep.status == PASS
    assert rep.values["validity"]["union"] == 0.0


def test_union_inherits_completeness_on_square():
    fx = fixtures.two_bit_square()
    x1 = ef_as_rv(fx.efs["x1"], fx.model, fx.space)
    x2 = ef_as_rv(fx.efs["x2"], fx.model, fx.space)
    h = fx.model.labels_rv(fx.space)
    rep = check_union_inheritance(gk_intersection(x1, x2), x1, x2, h, 0.01, 0.1, 0.5, 2)
    assert rep.status == PASS
    assert rep.values["completeness"]["g1"] == 0.5
    assert rep.values["completeness"]["union"] >= 0.5


def test_union_with_constant_parts_matches_g1():
    s = SampleSpace(np.arange(4.0))
    g = RandomVariable.from_values(s, [0, 1, 1, 0])
    h = RandomVariable.from_values(s, [0, 1, 1, 1])
    rep = check_union_inheritance(gk_intersection(g, g), g, g, h, 0.3, 0.1, 0.2, 2)
    v = rep.values
    assert v["validity"]["union"] == v["validity"]["g1"]
    assert v["completeness"]["union"] == v["completeness"]["g1"]


# --- uniqueness ----------------------------------------------------------------------

def test_uniqueness_identical_and_relabeled():
    _, g1, g2, _ = xor_rvs()
    dec = gk_intersection(g1, g2)
    same = check_intersection_uniqueness(dec, dec, 0.0)
    assert same.passed and all(e == 0 for e in same.values["errors"].values())
    swapped = relabel(dec, u_map={0: "odd", 1: "even"})
    rep = check_intersection_uniqueness(dec, swapped, 0.0)
    assert rep.passed and rep.values["u_bijection"]


def test_uniqueness_bound_at_one_bit():
    _, g1, g2, _ = xor_rvs()
    dec = gk_intersection(g1, g2)
    trivial = decomposition_from_values(g1, g2, g1.values, [0] * 8, g2.values)
    rep = check_intersection_uniqueness(dec, trivial, 1.0)
    assert rep.values["bound"] == 0.5
    assert rep.passed


def test_uniqueness_needs_same_pair():
    _, g1, g2, _ = xor_rvs()
    other = gk_intersection(g2, g1)
    with pytest.raises(StructuralError):
        check_intersection_uniqueness(gk_intersection(g1, g2), other, 0.0)


@given(joint_tables(ndim=2, max_arity=4), st.permutations(range(8)))
def test_uniqueness_exact_under_any_relabelling(p, perm):
    g1, g2 = rvs_of(p)
    dec = gk_intersection(g1, g2)
    u_map = {s: perm[k] for k, s in enumerate(dec.u.symbols)}
    e1_map = {s: perm[-1 - k] for k, s in enumerate(dec.e1.symbols)}
    other = relabel(dec, u_map=u_map, e1_map=e1_map)
    assert verify_decomposition(other, g1, g2, dec.achieved_epsilon).passed
    if dec.achieved_epsilon == 0.0:
        assert check_intersection_uniqueness(dec, other, 0.0).passed
    # relabelled u carries the same partition
    assert compose_rv(u_map, dec.u).same_partition(other.u)
