"""Intersection and union of two explanation random variables.

A decomposition rewrites g1 = r1^{-1}(e1, u) and g2 = r2^{-1}(e2, u) with
invertible recodings r1, r2, a shared part u and private parts e1, e2 whose
information about the other EF is at most epsilon.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import StructuralError
from .info_bounds import map_decoder
from .prob_core import INFO_TOL, RandomVariable, binary_entropy, entropy, joint, mutual_information
from .property_checkers import (
    FAIL,
    NOT_APPLICABLE,
    PASS,
    CheckReport,
    completeness_from_rv,
    validity_from_rv,
)


@dataclass(frozen=True, eq=False)
class Decomposition:
    g1: RandomVariable
    g2: RandomVariable
    u: RandomVariable
    e1: RandomVariable
    e2: RandomVariable
    r1: dict
    r2: dict

    @property
    def cross_information(self) -> tuple[float, float]:
        """(I(e1; g2), I(e2; g1))."""
        return mutual_information(self.e1, self.g2), mutual_information(self.e2, self.g1)

    @property
    def achieved_epsilon(self) -> float:
        return max(self.cross_information)

    def to_dict(self) -> dict:
        return {
            "u": self.u.values,
            "e1": self.e1.values,
            "e2": self.e2.values,
            "r1": [[k, list(v)] for k, v in self.r1.items()],
            "r2": [[k, list(v)] for k, v in self.r2.items()],
            "achieved_epsilon": self.achieved_epsilon,
        }


def decomposition_from_values(
    g1: RandomVariable,
    g2: RandomVariable,
    e1: Sequence[Any],
    u: Sequence[Any],
    e2: Sequence[Any],
) -> Decomposition:
    """Assemble a decomposition from per-point values; r-tables are read off pointwise.

    Raises if (e1, u) is not a function of g1 (or (e2, u) of g2); whether the
    tables are invertible is left to :func:`verify_decomposition`.
    """
    space = g1.space
    rv_u, rv_e1, rv_e2 = (RandomVariable.from_values(space, v) for v in (u, e1, e2))
    tables = []
    for g, e in ((g1, rv_e1), (g2, rv_e2)):
        r: dict = {}
        for gs, es, us in zip(g.values, e.values, rv_u.values):
            if r.setdefault(gs, (es, us)) != (es, us):
                raise StructuralError(f"symbol {gs!r} maps to both {r[gs]!r} and {(es, us)!r}")
        tables.append(r)
    return Decomposition(g1, g2, rv_u, rv_e1, rv_e2, tables[0], tables[1])


def relabel(dec: Decomposition, u_map: dict | None = None, e1_map: dict | None = None,
            e2_map: dict | None = None) -> Decomposition:
    """Same decomposition with u/e symbols renamed through the given bijections."""
    def apply(m, vals):
        return [m[v] for v in vals] if m else vals

    return decomposition_from_values(
        dec.g1, dec.g2, apply(e1_map, dec.e1.values), apply(u_map, dec.u.values), apply(e2_map, dec.e2.values)
    )


def gk_intersection(g1_rv: RandomVariable, g2_rv: RandomVariable) -> Decomposition:
    """Common-part decomposition from connected components of the co-occurrence graph.

    Nodes are the symbols of g1 and g2, joined when they occur together at
    some sample point. u is the component id (components numbered by their
    smallest g1 symbol), e_i the rank of the g_i symbol inside its component.
    """
    if not g1_rv.space.same_as(g2_rv.space):
        raise StructuralError("g1 and g2 live on different sample spaces")
    n1, n2 = g1_rv.arity, g2_rv.arity
    edges = np.unique(np.stack([g1_rv.codes, g2_rv.codes], axis=1), axis=0)
    graph = coo_matrix((np.ones(len(edges)), (edges[:, 0], n1 + edges[:, 1])), shape=(n1 + n2, n1 + n2))
    _, comp = connected_components(graph, directed=False)
    # every g1 symbol occurs, so each component contains a g1 node
    order = {}
    for c in comp[:n1]:
        order.setdefault(int(c), len(order))
    comp = np.array([order[int(c)] for c in comp])

    def ranks(offset: int, n: int) -> np.ndarray:
        rank = np.zeros(n, dtype=np.int64)
        seen: dict = {}
        for s in range(n):
            c = comp[offset + s]
            rank[s] = seen.get(c, 0)
            seen[c] = rank[s] + 1
        return rank

    rank1, rank2 = ranks(0, n1), ranks(n1, n2)
    comp1, comp2 = comp[:n1], comp[n1:]
    r1 = {g1_rv.symbols[s]: (int(rank1[s]), int(comp1[s])) for s in range(n1)}
    r2 = {g2_rv.symbols[s]: (int(rank2[s]), int(comp2[s])) for s in range(n2)}
    space = g1_rv.space
    return Decomposition(
        g1_rv,
        g2_rv,
        RandomVariable.from_values(space, comp1[g1_rv.codes].tolist()),
        RandomVariable.from_values(space, rank1[g1_rv.codes].tolist()),
        RandomVariable.from_values(space, rank2[g2_rv.codes].tolist()),
        r1,
        r2,
    )


def _table_problems(name: str, g: RandomVariable, e: RandomVariable, u: RandomVariable, r: dict) -> list:
    problems = []
    missing = [s for s in g.symbols if s not in r]
    if missing:
        problems.append(f"{name} undefined on symbols {missing[:5]!r}")
    image = [r[s] for s in g.symbols if s in r]
    if len(set(image)) != len(image):
        problems.append(f"{name} is not injective")
    realized = set(zip(e.values, u.values))
    if set(image) != realized:
        problems.append(f"{name} image differs from the realized (e, u) pairs")
    for k, (gs, es, us) in enumerate(zip(g.values, e.values, u.values)):
        if r.get(gs) != (es, us):
            problems.append(f"{name}(g) != (e, u) at point {k}")
            break
    return problems


def verify_decomposition(
    dec: Decomposition, g1_rv: RandomVariable, g2_rv: RandomVariable, epsilon: float
) -> CheckReport:
    """Bijective r-tables, pointwise agreement, and cross-information at most epsilon."""
    failures = [{"reason": p} for p in _table_problems("r1", g1_rv, dec.e1, dec.u, dec.r1)]
    failures += [{"reason": p} for p in _table_problems("r2", g2_rv, dec.e2, dec.u, dec.r2)]
    i12 = mutual_information(dec.e1, g2_rv)
    i21 = mutual_information(dec.e2, g1_rv)
    achieved = max(i12, i21)
    if achieved > epsilon + INFO_TOL:
        failures.append({"reason": "cross information exceeds epsilon", "achieved": achieved})
    return CheckReport(
        "decomposition",
        FAIL if failures else PASS,
        {
            "epsilon": epsilon,
            "I_e1_g2": i12,
            "I_e2_g1": i21,
            "achieved_epsilon": achieved,
            "e1_independent_of_g2": i12 <= INFO_TOL,
            "e2_independent_of_g1": i21 <= INFO_TOL,
        },
        failures,
    )


def union_rv(dec: Decomposition) -> RandomVariable:
    """The triple (e1, u, e2) as one random variable."""
    return joint(dec.e1, dec.u, dec.e2)


def intersection_validity_bound(epsilon0: float, alpha: float, h_entropy: float) -> float:
    """1 - 2^(-eps0 - 2 sqrt(eps0) - H(h)) / (1 - alpha)."""
    return 1.0 - 2.0 ** (-epsilon0 - 2.0 * math.sqrt(epsilon0) - h_entropy) / (1.0 - alpha)


def check_intersection_validity(
    dec: Decomposition,
    g1_rv: RandomVariable,
    g2_rv: RandomVariable,
    h_rv: RandomVariable,
    epsilon: float,
    epsilon0: float,
    alpha: float,
    codomain_size: int = 2,
    candidates: Sequence[Sequence[Any]] | None = None,
    cap: int | None = None,
) -> CheckReport:
    """The intersection u decodes h with loss at most eps1 when g1 is valid and g2 complete."""
    name = "intersection_validity"
    values: dict = {"epsilon": epsilon, "epsilon0": epsilon0, "alpha": alpha}
    reasons = []
    if h_rv.arity != 2:
        reasons.append(f"labels take {h_rv.arity} values, need exactly 2")
    validity = validity_from_rv(g1_rv, h_rv).epsilon0
    values["g1_validity"] = validity
    if validity > epsilon0 + INFO_TOL:
        reasons.append(f"g1 is only {validity:.6g}-valid")
    comp = completeness_from_rv(g2_rv, h_rv, epsilon, codomain_size, candidates, cap)
    values["g2_alpha_hat"] = comp.alpha_hat
    if comp.alpha_hat < alpha - INFO_TOL:
        reasons.append(f"g2 is not ({epsilon}, {alpha})-complete on the family (alpha_hat={comp.alpha_hat:.6g})")
    verified = verify_decomposition(dec, g1_rv, g2_rv, epsilon)
    values["decomposition"] = verified.values
    if verified.failed:
        reasons.append("decomposition does not verify at epsilon")
    h_entropy = entropy(h_rv)
    values["H_h"] = h_entropy
    if alpha >= 1.0:
        reasons.append("1 - alpha <= 0: bound vacuous")
    else:
        eps1 = intersection_validity_bound(epsilon0, alpha, h_entropy)
        values["epsilon1"] = eps1
        if not 0.0 <= eps1 <= 1.0:
            reasons.append(f"epsilon1={eps1:.6g} outside [0, 1]: bound vacuous")
    if reasons:
        return CheckReport(name, NOT_APPLICABLE, values, [{"reason": r} for r in reasons])
    t = map_decoder(dec.u, h_rv)
    values["u_loss"] = t.error_rate
    values["u_decoder"] = t.to_dict()
    ok = t.error_rate <= values["epsilon1"] + INFO_TOL
    return CheckReport(name, PASS if ok else FAIL, values, [] if ok else [{"reason": "u loss exceeds epsilon1"}])


def check_union_inheritance(
    dec: Decomposition,
    g1_rv: RandomVariable,
    g2_rv: RandomVariable,
    h_rv: RandomVariable,
    epsilon0: float,
    epsilon1: float,
    alpha: float,
    codomain_size: int = 2,
    candidates: Sequence[Sequence[Any]] | None = None,
    cap: int | None = None,
) -> CheckReport:
    """Validity and completeness of either EF carry over to the union.

    Each branch is checked only when its hypothesis holds for g1 or g2.
    """
    union = union_rv(dec)
    branches: dict = {}
    failures = []

    v1, v2 = validity_from_rv(g1_rv, h_rv).epsilon0, validity_from_rv(g2_rv, h_rv).epsilon0
    vu = validity_from_rv(union, h_rv).epsilon0
    if min(v1, v2) <= epsilon0 + INFO_TOL:
        ok = vu <= epsilon0 + INFO_TOL
        branches["validity"] = {"status": PASS if ok else FAIL, "g1": v1, "g2": v2, "union": vu}
        if not ok:
            failures.append({"reason": "union loses validity", "union_epsilon0": vu})
    else:
        branches["validity"] = {"status": NOT_APPLICABLE, "g1": v1, "g2": v2, "union": vu}

    c1 = completeness_from_rv(g1_rv, h_rv, epsilon1, codomain_size, candidates, cap).alpha_hat
    c2 = completeness_from_rv(g2_rv, h_rv, epsilon1, codomain_size, candidates, cap).alpha_hat
    cu = completeness_from_rv(union, h_rv, epsilon1, codomain_size, candidates, cap).alpha_hat
    if max(c1, c2) >= alpha - INFO_TOL:
        ok = cu >= alpha - INFO_TOL
        branches["completeness"] = {"status": PASS if ok else FAIL, "g1": c1, "g2": c2, "union": cu}
        if not ok:
            failures.append({"reason": "union loses completeness", "union_alpha_hat": cu})
    else:
        branches["completeness"] = {"status": NOT_APPLICABLE, "g1": c1, "g2": c2, "union": cu}

    statuses = {b["status"] for b in branches.values()}
    status = FAIL if FAIL in statuses else PASS if PASS in statuses else NOT_APPLICABLE
    values = {"epsilon0": epsilon0, "epsilon1": epsilon1, "alpha": alpha, "union_entropy": entropy(union)}
    values.update(branches)
    return CheckReport("union_inheritance", status, values, failures)


def _exact_inverse(forward: dict, backward: dict) -> bool:
    return all(backward.get(b) == a for a, b in forward.items()) and all(
        forward.get(b) == a for a, b in backward.items()
    )


def check_intersection_uniqueness(dec_a: Decomposition, dec_b: Decomposition, epsilon: float) -> CheckReport:
    """Two intersections of the same pair determine each other up to loss 1 - 2^-eps."""
    if not (dec_a.g1.same_partition(dec_b.g1) and dec_a.g2.same_partition(dec_b.g2)):
        raise StructuralError("decompositions are of different random-variable pairs")
    bound = 1.0 - 2.0 ** (-epsilon)
    maps = {
        "s1": map_decoder(dec_a.u, dec_b.u),
        "s2": map_decoder(dec_b.u, dec_a.u),
        "d1": map_decoder(dec_a.e1, dec_b.e1),
        "d2": map_decoder(dec_b.e1, dec_a.e1),
    }
    failures = [
        {"map": k, "error": t.error_rate, "bound": bound}
        for k, t in maps.items()
        if t.error_rate > bound + INFO_TOL
    ]
    values: dict = {"epsilon": epsilon, "bound": bound, "errors": {k: t.error_rate for k, t in maps.items()}}
    if epsilon <= 1e-12:
        exact_u = _exact_inverse(maps["s1"].table, maps["s2"].table)
        exact_e = _exact_inverse(maps["d1"].table, maps["d2"].table)
        values.update(u_bijection=exact_u, e1_bijection=exact_e)
        if not exact_u:
            failures.append({"reason": "s1 and s2 are not mutually inverse bijections"})
        if not exact_e:
            failures.append({"reason": "d1 and d2 are not mutually inverse bijections"})
    values["tables"] = {k: t.to_dict()["table"] for k, t in maps.items()}
    return CheckReport("intersection_uniqueness", FAIL if failures else PASS, values, failures)
