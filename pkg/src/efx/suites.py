"""Built-in verification suites: seeded random instances plus pinned fixtures."""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

from . import fixtures
from .ef_algebra import (
    check_intersection_uniqueness,
    check_intersection_validity,
    check_union_inheritance,
    decomposition_from_values,
    gk_intersection,
    relabel,
    verify_decomposition,
)
from .ef_kit import ef_as_rv
from .errors import PreconditionError
from .info_bounds import (
    BoundReport,
    check_entropy_upper,
    check_fano_converse,
    check_fano_lower,
    check_mi_stability,
    map_decoder,
)
from .model_graph import check_jacobians, margin_check
from .property_checkers import (
    FAIL,
    NOT_APPLICABLE,
    PASS,
    CheckReport,
    check_consistency_propagation,
    check_explainability_propagation,
    check_gradient_ef_explainability,
    valid_implies_complete_from_rv,
)
from .report import finalize

SUITES = ("lemmas", "thm1", "thm2", "thm3", "thm4", "thm5", "union", "uniqueness")
LEMMA_INSTANCES = 100
MODEL_INSTANCES = 20

# stream ids keep each suite's random draws independent of the others
_STREAM = {"fano_lower": 1, "mi_stability": 2, "entropy_upper": 3, "fano_converse": 4, "models": 10}


def _rng(seed: int, stream: str, k: int) -> np.random.Generator:
    return np.random.default_rng([seed, _STREAM[stream], k])


def _entry(suite: str, check: str, instance: int, seed, report) -> dict:
    if isinstance(report, BoundReport):
        status, values = (PASS if report.satisfied else FAIL), report.to_dict()
    else:
        status, values = report.status, report.values
        if report.failures:
            values = {**values, "failures": report.failures}
    return {"suite": suite, "check": check, "instance": instance, "seed": seed, "status": status, "values": values}


def lemma_suite(seed: int) -> Iterator[dict]:
    for k in range(LEMMA_INSTANCES):
        x, y = fixtures.random_joint_pair(_rng(seed, "fano_lower", k), min_success=0.5)
        yield _entry("lemmas", "fano_lower", k, [seed, _STREAM["fano_lower"], k], check_fano_lower(x, y, map_decoder(y, x)))
    for k in range(LEMMA_INSTANCES):
        rng = _rng(seed, "mi_stability", k)
        probs = fixtures.random_joint(rng, (int(rng.integers(2, 6)), 2, 2))
        _, (x, y, z) = fixtures.joint_space(probs)
        yield _entry("lemmas", "mi_stability", k, [seed, _STREAM["mi_stability"], k], check_mi_stability(x, y, z))
    for k in range(LEMMA_INSTANCES):
        p = float(_rng(seed, "entropy_upper", k).random())
        yield _entry("lemmas", "entropy_upper", k, [seed, _STREAM["entropy_upper"], k], check_entropy_upper(p))
    for k in range(LEMMA_INSTANCES):
        x, y = fixtures.random_joint_pair(_rng(seed, "fano_converse", k))
        yield _entry("lemmas", "fano_converse", k, [seed, _STREAM["fano_converse"], k], check_fano_converse(x, y)[1])


def _model_instances(seed: int):
    for k in range(MODEL_INSTANCES):
        yield k, fixtures.random_layered_model(_rng(seed, "models", k))


def thm1_suite(seed: int) -> Iterator[dict]:
    for k, (model, space, g) in _model_instances(seed):
        for i in range(0, model.depth):
            for j in range(i + 1, model.depth + 1):
                rep = check_consistency_propagation(model, g, i, j, space)
                rep.values = {kk: v for kk, v in rep.values.items() if kk not in ("beta_i", "beta_j")}
                yield _entry("thm1", f"consistency_{i}_{j}", k, [seed, _STREAM["models"], k], rep)


def thm2_suite(seed: int) -> Iterator[dict]:
    for k, (model, space, g) in _model_instances(seed):
        for i in range(1, model.depth + 1):
            for j in range(0, i):
                rep = check_explainability_propagation(model, g, j, i, space)
                rep.values = {kk: v for kk, v in rep.values.items() if kk not in ("gamma_i", "gamma_j")}
                yield _entry("thm2", f"explainability_{j}_{i}", k, [seed, _STREAM["models"], k], rep)


def _guarded(fn: Callable[[], CheckReport], name: str) -> CheckReport:
    try:
        return fn()
    except PreconditionError as exc:
        return CheckReport(name, FAIL, {}, [{"reason": str(exc)}])


def thm3_suite(seed: int) -> Iterator[dict]:
    shifted = fixtures.shifted_identity()
    tanh = fixtures.tanh_hidden()
    m = margin_check(shifted.model, shifted.space, shifted.delta)
    yield _entry("thm3", "margin_shifted", 0, None, CheckReport("margin", PASS if m.passed else FAIL, m.to_dict()))
    yield _entry(
        "thm3",
        "gradient_shifted",
        0,
        None,
        _guarded(lambda: check_gradient_ef_explainability(shifted.model, shifted.space, shifted.delta), "gradient"),
    )
    for split in (1, 2, 3):
        yield _entry(
            "thm3",
            f"gradient_tanh_split{split}",
            0,
            None,
            _guarded(lambda: check_gradient_ef_explainability(tanh.model, tanh.space, tanh.delta, split), "gradient"),
        )
    for name, fx in (("shifted", shifted), ("tanh", tanh)):
        jc = check_jacobians(fx.model, fx.space)
        yield _entry("thm3", f"jacobians_{name}", 0, None, CheckReport("jacobians", PASS if jc.passed else FAIL, jc.to_dict()))


def thm4_suite(seed: int) -> Iterator[dict]:
    fx = fixtures.two_bit_square()
    g = ef_as_rv(fx.efs["x1"], fx.model, fx.space)
    h = fx.model.labels_rv(fx.space)
    yield _entry("thm4", "two_bit_square", 0, None, valid_implies_complete_from_rv(g, h, 0.1, 0.01, 2))
    # hypothesis H(p) > eps + 2 sqrt(eps0) fails: must come back not applicable
    rep = valid_implies_complete_from_rv(g, h, 0.9, 0.01, 2)
    status = PASS if rep.status == NOT_APPLICABLE else FAIL
    yield _entry("thm4", "hypothesis_guard", 0, None, CheckReport(rep.name, status, rep.values, rep.failures))


def _xor_rvs():
    fx = fixtures.xor_bits()
    g1 = ef_as_rv(fx.efs["g1"], fx.model, fx.space)
    g2 = ef_as_rv(fx.efs["g2"], fx.model, fx.space)
    return g1, g2, fx.model.labels_rv(fx.space)


def thm5_suite(seed: int) -> Iterator[dict]:
    g1, g2, h = _xor_rvs()
    dec = gk_intersection(g1, g2)
    yield _entry("thm5", "xor_bits_decomposition", 0, None, verify_decomposition(dec, g1, g2, 0.0))
    yield _entry("thm5", "xor_bits_intersection", 0, None, check_intersection_validity(dec, g1, g2, h, 0.0, 0.01, 0.5))


def union_suite(seed: int) -> Iterator[dict]:
    g1, g2, h = _xor_rvs()
    dec = gk_intersection(g1, g2)
    yield _entry("union", "xor_bits", 0, None, check_union_inheritance(dec, g1, g2, h, 0.01, 0.0, 0.5, 2))
    fx = fixtures.two_bit_square()
    x1 = ef_as_rv(fx.efs["x1"], fx.model, fx.space)
    x2 = ef_as_rv(fx.efs["x2"], fx.model, fx.space)
    hh = fx.model.labels_rv(fx.space)
    dec2 = gk_intersection(x1, x2)
    yield _entry("union", "two_bit_square", 0, None, check_union_inheritance(dec2, x1, x2, hh, 0.01, 0.1, 0.5, 2))


def uniqueness_suite(seed: int) -> Iterator[dict]:
    g1, g2, _ = _xor_rvs()
    dec = gk_intersection(g1, g2)
    yield _entry("uniqueness", "identical", 0, None, check_intersection_uniqueness(dec, dec, 0.0))
    swapped = relabel(dec, u_map={0: 1, 1: 0}, e1_map={0: 1, 1: 0})
    yield _entry("uniqueness", "relabeled", 0, None, check_intersection_uniqueness(dec, swapped, 0.0))
    # u constant, e_i = g_i: cross information 1 bit, so it is a 1-intersection
    trivial = decomposition_from_values(g1, g2, g1.values, [0] * g1.space.size, g2.values)
    yield _entry("uniqueness", "eps1_trivial_vs_gk", 0, None, check_intersection_uniqueness(dec, trivial, 1.0))


_RUNNERS = {
    "lemmas": lemma_suite,
    "thm1": thm1_suite,
    "thm2": thm2_suite,
    "thm3": thm3_suite,
    "thm4": thm4_suite,
    "thm5": thm5_suite,
    "union": union_suite,
    "uniqueness": uniqueness_suite,
}


def verify_suite(name: str, seed: int) -> dict:
    """Run a named suite (or ``all``) and return the finalized report."""
    if name != "all" and name not in _RUNNERS:
        raise KeyError(name)
    names = SUITES if name == "all" else (name,)
    results = [entry for n in names for entry in _RUNNERS[n](seed)]
    counts = {s: sum(r["status"] == s for r in results) for s in (PASS, FAIL, NOT_APPLICABLE)}
    body = {
        "command": "verify",
        "suite": name,
        "seed": seed,
        "summary": {"total": len(results), **counts},
        "results": results,
    }
    return finalize(body)
