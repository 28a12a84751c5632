"""Executable consistency, explainability, validity and completeness checks.

On a finite domain the tightest modulus for which a consistency or
explainability implication holds can be read off the pairwise distances, so
these checks are exact scans over all point pairs rather than samples.
Completeness is decided relative to an enumerated family of candidate
functions of x.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .ef_kit import DEFAULT_RESOLUTION, ExplanationFunction, ef_as_rv, ef_values, gradient_ef
from .errors import DegenerateDomainError, PreconditionError, ResourceError, StructuralError
from .info_bounds import Decoder, map_decoder
from .model_graph import LayeredModel, lipschitz_estimate, margin_check, pairwise_ratio_max
from .prob_core import INFO_TOL, RandomVariable, SampleSpace, binary_entropy, entropy

DEFAULT_ENUM_CAP = 10**6
PASS, FAIL, NOT_APPLICABLE = "pass", "fail", "not_applicable"


def enum_cap() -> int:
    """Candidate-enumeration cap, overridable through ``EFX_ENUM_CAP``."""
    raw = os.environ.get("EFX_ENUM_CAP")
    return int(raw) if raw else DEFAULT_ENUM_CAP


@dataclass
class CheckReport:
    """Outcome of an assertion-type analysis."""

    name: str
    status: str
    values: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    @property
    def failed(self) -> bool:
        return self.status == FAIL

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "values": self.values, "failures": self.failures}


@dataclass(frozen=True)
class ModulusCurve:
    """Right-continuous step function through sorted (epsilon, value) breakpoints.

    Below the first breakpoint the value is 0 (no pair qualifies).
    """

    breakpoints: tuple

    @classmethod
    def from_pairs(cls, keys: np.ndarray, vals: np.ndarray) -> "ModulusCurve":
        """Curve eps -> max{val : key <= eps} over the given pairs."""
        keys = np.asarray(keys, dtype=float)
        vals = np.asarray(vals, dtype=float)
        if keys.size == 0:
            return cls(())
        order = np.argsort(keys, kind="stable")
        k, v = keys[order], np.maximum.accumulate(vals[order])
        last = np.r_[k[1:] != k[:-1], True]
        return cls(tuple(zip(k[last].tolist(), v[last].tolist())))

    @property
    def epsilons(self) -> np.ndarray:
        return np.array([e for e, _ in self.breakpoints], dtype=float)

    @property
    def values(self) -> np.ndarray:
        return np.array([v for _, v in self.breakpoints], dtype=float)

    def evaluate(self, eps) -> np.ndarray:
        eps = np.asarray(eps, dtype=float)
        if not self.breakpoints:
            return np.zeros_like(eps)
        idx = np.searchsorted(self.epsilons, eps, side="right") - 1
        return np.where(idx >= 0, self.values[np.maximum(idx, 0)], 0.0)

    def __call__(self, eps: float) -> float:
        return float(self.evaluate(eps))

    def to_dict(self) -> dict:
        return {"breakpoints": [list(bp) for bp in self.breakpoints]}


def _pairwise(model: LayeredModel, i: int, g: ExplanationFunction, space: SampleSpace):
    if space.size < 2:
        raise DegenerateDomainError("moduli need at least two sample points")
    d_f = pdist(model.realized(i, space))
    d_g = pdist(ef_values(g, model, space))
    return d_f, d_g


def consistency_modulus(model: LayeredModel, i: int, g: ExplanationFunction, space: SampleSpace) -> ModulusCurve:
    """beta(eps) = max{|f_i(x1) - f_i(x2)| : |g(x1,h(x1)) - g(x2,h(x2))| <= eps}."""
    d_f, d_g = _pairwise(model, i, g, space)
    return ModulusCurve.from_pairs(d_g, d_f)


def explainability_modulus(model: LayeredModel, i: int, g: ExplanationFunction, space: SampleSpace) -> ModulusCurve:
    """gamma(eps) = max{|g(x1,h(x1)) - g(x2,h(x2))| : |f_i(x1) - f_i(x2)| <= eps}."""
    d_f, d_g = _pairwise(model, i, g, space)
    return ModulusCurve.from_pairs(d_f, d_g)


@dataclass(frozen=True)
class SecondOrderTable:
    eps0: tuple
    eps1: tuple
    values: np.ndarray

    def to_dict(self) -> dict:
        return {"eps0": list(self.eps0), "eps1": list(self.eps1), "values": self.values.tolist()}


def second_order_modulus(
    model: LayeredModel,
    i: int,
    g: ExplanationFunction,
    space: SampleSpace,
    eps0_grid: Sequence[float],
    eps1_grid: Sequence[float],
) -> SecondOrderTable:
    """Entry (a, b) = max d_g over pairs with d_f <= a and Jacobian distance d_J <= b."""
    d_f, d_g = _pairwise(model, i, g, space)
    jacs = np.array([model.prefix_jacobian(i, x).ravel() for x in space.points])
    d_j = pdist(jacs)
    table = np.zeros((len(eps0_grid), len(eps1_grid)))
    for a, e0 in enumerate(eps0_grid):
        in_f = d_f <= e0
        for b, e1 in enumerate(eps1_grid):
            mask = in_f & (d_j <= e1)
            table[a, b] = d_g[mask].max() if mask.any() else 0.0
    return SecondOrderTable(tuple(map(float, eps0_grid)), tuple(map(float, eps1_grid)), table)


def check_consistency_propagation(
    model: LayeredModel, g: ExplanationFunction, i: int, j: int, space: SampleSpace
) -> CheckReport:
    """beta_j(eps) <= (prod of layer constants in (i, j]) * beta_i(eps) at every breakpoint."""
    if not (0 <= i < j <= model.depth):
        raise StructuralError(f"need 0 <= i < j <= {model.depth}, got i={i}, j={j}")
    beta_i = consistency_modulus(model, i, g, space)
    beta_j = consistency_modulus(model, j, g, space)
    lip = lipschitz_estimate(model, i, j, space)
    eps = np.union1d(beta_i.epsilons, beta_j.epsilons)
    slack = lip.product * beta_i.evaluate(eps) - beta_j.evaluate(eps)
    bad = np.flatnonzero(slack < -INFO_TOL)
    failures = [{"epsilon": float(eps[k]), "excess": float(-slack[k])} for k in bad[:20]]
    return CheckReport(
        "consistency_propagation",
        FAIL if bad.size else PASS,
        {
            "i": i,
            "j": j,
            "lipschitz": lip.to_dict(),
            "breakpoints": int(eps.size),
            "min_slack": float(slack.min()) if eps.size else 0.0,
            "beta_i": beta_i.to_dict(),
            "beta_j": beta_j.to_dict(),
        },
        failures,
    )


# relative widening of the argument of gamma_i; absorbs roundoff in products of ratios
_ARG_RTOL = 1e-9


def check_explainability_propagation(
    model: LayeredModel, g: ExplanationFunction, j: int, i: int, space: SampleSpace
) -> CheckReport:
    """gamma_j(eps) <= gamma_i(eps * prod of layer constants in (j, i]) at every breakpoint of gamma_j."""
    if not (0 <= j < i <= model.depth):
        raise StructuralError(f"need 0 <= j < i <= {model.depth}, got j={j}, i={i}")
    gamma_i = explainability_modulus(model, i, g, space)
    gamma_j = explainability_modulus(model, j, g, space)
    lip = lipschitz_estimate(model, j, i, space)
    eps = gamma_j.epsilons
    slack = gamma_i.evaluate(eps * lip.product * (1.0 + _ARG_RTOL)) - gamma_j.evaluate(eps)
    bad = np.flatnonzero(slack < -INFO_TOL)
    failures = [{"epsilon": float(eps[k]), "excess": float(-slack[k])} for k in bad[:20]]
    return CheckReport(
        "explainability_propagation",
        FAIL if bad.size else PASS,
        {
            "j": j,
            "i": i,
            "lipschitz": lip.to_dict(),
            "breakpoints": int(eps.size),
            "min_slack": float(slack.min()) if eps.size else 0.0,
            "gamma_i": gamma_i.to_dict(),
            "gamma_j": gamma_j.to_dict(),
        },
        failures,
    )


def _safe_ratio_max(inputs: np.ndarray, outputs: np.ndarray) -> float:
    try:
        return pairwise_ratio_max(inputs, outputs)
    except DegenerateDomainError:
        return 0.0


SLOPE_SAFETY = 2.0


def check_gradient_ef_explainability(
    model: LayeredModel, space: SampleSpace, delta: float, split: int | None = None
) -> CheckReport:
    """Label stability and a linear slope bound for the gradient EF of an argmax model.

    ``split`` is the layer index m with f = p_m o ... o p_1; the remaining layers
    form c. Pairs with |f(x1) - f(x2)| below the stability threshold must share
    a label, and over those pairs d_g <= C (d_f + d_J) must hold with C
    assembled from realized Lipschitz constants (times a safety factor of 2).
    """
    if model.head is None:
        raise StructuralError("gradient EF check needs an argmax head")
    margin = margin_check(model, space, delta)
    if not margin.passed:
        raise PreconditionError(
            f"margin check failed: min |p(x)| = {margin.min_norm:g}, class separation = {margin.min_separation:g}"
        )
    k = model.depth
    m = k if split is None else split
    if not 1 <= m <= k:
        raise StructuralError(f"split must lie in [1, {k}], got {m}")
    g = gradient_ef(model)
    heads = model.head.class_vectors
    max_m = float(np.linalg.norm(heads, axis=1).max())

    F = model.realized(m, space)
    P = model.realized(k, space)
    jf = np.array([model.prefix_jacobian(m, x).ravel() for x in space.points])
    jc = np.array([model.jacobian_between(m, k, x).ravel() for x in space.points])
    G = ef_values(g, model, space)
    labels = model.labels_rv(space).codes

    l_c = 1.0 if m == k else _safe_ratio_max(F, P)
    l_dc = 0.0 if m == k else _safe_ratio_max(F, jc)
    sup_jf = float(np.linalg.norm(jf, axis=1).max())
    sup_jc = float(np.linalg.norm(jc, axis=1).max())
    constant = max_m * (l_dc * sup_jf + sup_jc)
    bound = SLOPE_SAFETY * constant

    threshold = math.inf if l_c == 0 else margin.min_separation * delta / (2.0 * l_c * max_m)
    d_f, d_j, d_g = pdist(F), pdist(jf), pdist(G)
    a, b = np.triu_indices(space.size, 1)
    qualifying = d_f < threshold
    same = labels[a] == labels[b]
    unstable = np.flatnonzero(qualifying & ~same)
    stable = qualifying & same

    denom = d_f[stable] + d_j[stable]
    num = d_g[stable]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(denom > 0, num / denom, np.where(num > 0, np.inf, 0.0))
    slope = float(ratios.max()) if ratios.size else 0.0

    failures = [{"pair": [int(a[t]), int(b[t])], "reason": "label changes below threshold"} for t in unstable[:20]]
    if slope > bound + INFO_TOL:
        failures.append({"reason": "slope exceeds bound", "slope": slope, "bound": bound})
    return CheckReport(
        "gradient_ef_explainability",
        FAIL if failures else PASS,
        {
            "split": m,
            "margin": margin.to_dict(),
            "stability_threshold": threshold,
            "qualifying_pairs": int(qualifying.sum()),
            "unstable_pairs": int(unstable.size),
            "slope": slope,
            "constant": constant,
            "bound": bound,
            "lipschitz_c": l_c,
            "lipschitz_dc": l_dc,
            "sup_jacobian_f": sup_jf,
            "sup_jacobian_c": sup_jc,
            "max_head_norm": max_m,
        },
        failures,
    )


@dataclass(frozen=True)
class ValidityReport:
    decoder: Decoder
    epsilon0: float
    loss_name: str = "zero_one"

    def to_dict(self) -> dict:
        return {"epsilon0": self.epsilon0, "loss_name": self.loss_name, "decoder": self.decoder.to_dict()}


def validity_from_rv(g_rv: RandomVariable, h_rv: RandomVariable) -> ValidityReport:
    """Smallest expected 0-1 loss of any decoder t(g) for h (attained by MAP)."""
    t = map_decoder(g_rv, h_rv)
    return ValidityReport(t, t.error_rate)


def validity_level(
    g: ExplanationFunction, model: LayeredModel, space: SampleSpace, resolution: float = DEFAULT_RESOLUTION
) -> ValidityReport:
    return validity_from_rv(ef_as_rv(g, model, space, resolution), model.labels_rv(space))


@dataclass(frozen=True)
class CompletenessReport:
    epsilon: float
    alpha_hat: float
    witness: dict | None
    family: str
    family_size: int
    admissible: int

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "alpha_hat": self.alpha_hat,
            "witness": self.witness,
            "family": self.family,
            "family_size": self.family_size,
            "admissible": self.admissible,
        }


def _weighted_onehot(rv: RandomVariable) -> np.ndarray:
    out = np.zeros((rv.space.size, rv.arity))
    out[np.arange(rv.space.size), rv.codes] = rv.space.weights
    return out


def _score_candidates(codes: np.ndarray, n_values: int, wg: np.ndarray, pg: np.ndarray, wh: np.ndarray):
    """MI with g and MAP loss for h of every candidate row, vectorized over rows."""
    jg = np.empty((codes.shape[0], n_values, wg.shape[1]))
    jh = np.empty((codes.shape[0], n_values, wh.shape[1]))
    for v in range(n_values):
        mask = (codes == v).astype(float)
        jg[:, v, :] = mask @ wg
        jh[:, v, :] = mask @ wh
    pv = jg.sum(axis=2, keepdims=True)
    denom = pv * pg[None, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(jg > 0, jg * np.log2(jg / denom), 0.0)
    mi = np.maximum(terms.sum(axis=(1, 2)), 0.0)
    loss = np.maximum(1.0 - jh.max(axis=2).sum(axis=1), 0.0)
    return mi, loss


def _enumerated_codes(n_points: int, n_values: int, chunk: int) -> Iterable[tuple[int, np.ndarray]]:
    total = n_values**n_points
    powers = n_values ** np.arange(n_points - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total), dtype=np.int64)
        yield start, (idx[:, None] // powers[None, :]) % n_values


def completeness_from_rv(
    g_rv: RandomVariable,
    h_rv: RandomVariable,
    epsilon: float,
    codomain_size: int = 2,
    candidates: Sequence[Sequence[Any]] | None = None,
    cap: int | None = None,
    chunk: int = 4096,
) -> CompletenessReport:
    """alpha_hat = min MAP loss for h over candidates gbar with I(g; gbar) <= epsilon.

    Without explicit ``candidates`` the family is every function from the
    sample points into ``range(codomain_size)``.
    """
    space = g_rv.space
    if not space.same_as(h_rv.space):
        raise StructuralError("g and h live on different sample spaces")
    wg, wh = _weighted_onehot(g_rv), _weighted_onehot(h_rv)
    pg = wg.sum(axis=0)
    best_loss, best_idx, best_codes = math.inf, None, None
    admissible = 0

    if candidates is None:
        if codomain_size < 1:
            raise StructuralError("codomain_size must be positive")
        cap = enum_cap() if cap is None else cap
        family_size = codomain_size**space.size
        if family_size > cap:
            raise ResourceError(
                f"{codomain_size}^{space.size} = {family_size} candidates exceed the enumeration cap {cap} (EFX_ENUM_CAP)"
            )
        family = f"all functions from {space.size} points to range({codomain_size})"
        batches = _enumerated_codes(space.size, codomain_size, chunk)
        n_values = codomain_size
    else:
        rows = []
        for cand in candidates:
            rows.append(RandomVariable.from_values(space, list(cand)).codes)
        family_size = len(rows)
        family = f"explicit list of {family_size} candidates"
        n_values = max((int(r.max()) + 1 for r in rows), default=1)
        codes_all = np.array(rows, dtype=np.int64).reshape(family_size, space.size)
        batches = ((s, codes_all[s : s + chunk]) for s in range(0, family_size, chunk))

    for start, codes in batches:
        mi, loss = _score_candidates(codes, n_values, wg, pg, wh)
        ok = mi <= epsilon + INFO_TOL
        admissible += int(ok.sum())
        if ok.any():
            masked = np.where(ok, loss, np.inf)
            t = int(np.argmin(masked))
            if masked[t] < best_loss:
                best_loss, best_idx, best_codes = float(masked[t]), start + t, codes[t].copy()

    witness = None
    if best_codes is not None:
        values = list(candidates[best_idx]) if candidates is not None else best_codes.tolist()
        gbar = RandomVariable.from_values(space, values)
        witness = {"index": int(best_idx), "values": values, "decoder": map_decoder(gbar, h_rv).to_dict()}
    return CompletenessReport(float(epsilon), best_loss, witness, family, int(family_size), admissible)


def completeness_level(
    g: ExplanationFunction,
    model: LayeredModel,
    space: SampleSpace,
    epsilon: float,
    codomain_size: int = 2,
    resolution: float = DEFAULT_RESOLUTION,
    candidates: Sequence[Sequence[Any]] | None = None,
    cap: int | None = None,
) -> CompletenessReport:
    return completeness_from_rv(
        ef_as_rv(g, model, space, resolution), model.labels_rv(space), epsilon, codomain_size, candidates, cap
    )


def valid_complete_alpha(h_p: float, epsilon: float, epsilon0: float) -> float:
    """(sqrt(1 + H(p)(H(p) - eps - 2 sqrt(eps0))) - 1) / H(p), with H(p) passed in."""
    return (math.sqrt(1.0 + h_p * (h_p - epsilon - 2.0 * math.sqrt(epsilon0))) - 1.0) / h_p


def valid_implies_complete_from_rv(
    g_rv: RandomVariable,
    h_rv: RandomVariable,
    epsilon: float,
    epsilon0: float,
    codomain_size: int = 2,
    candidates: Sequence[Sequence[Any]] | None = None,
    cap: int | None = None,
) -> CheckReport:
    """Search the candidate family for a counterexample to the valid => complete bound."""
    name = "valid_implies_complete"
    reasons = []
    if h_rv.arity != 2:
        reasons.append(f"labels take {h_rv.arity} values, need exactly 2")
    if not 0.0 < epsilon0 < 0.5:
        reasons.append(f"epsilon0={epsilon0!r} not in (0, 0.5)")
    if not epsilon > 0:
        reasons.append(f"epsilon={epsilon!r} must be positive")
    p = float(h_rv.pmf()[-1])
    h_p = binary_entropy(min(max(p, 0.0), 1.0))
    if not h_p > epsilon + 2.0 * math.sqrt(max(epsilon0, 0.0)):
        reasons.append(f"H(p)={h_p:.6g} does not exceed epsilon + 2 sqrt(epsilon0)")
    validity = validity_from_rv(g_rv, h_rv)
    if validity.epsilon0 > epsilon0 + INFO_TOL:
        reasons.append(f"g is only {validity.epsilon0:.6g}-valid")
    values = {"p": p, "H_p": h_p, "epsilon": epsilon, "epsilon0": epsilon0, "validity": validity.epsilon0}
    if reasons:
        return CheckReport(name, NOT_APPLICABLE, values, [{"reason": r} for r in reasons])
    alpha = valid_complete_alpha(h_p, epsilon, epsilon0)
    comp = completeness_from_rv(g_rv, h_rv, epsilon, codomain_size, candidates, cap)
    values.update(alpha=alpha, alpha_hat=comp.alpha_hat, completeness=comp.to_dict())
    ok = comp.alpha_hat >= alpha - INFO_TOL
    failures = [] if ok else [{"reason": "candidate beats the bound", "witness": comp.witness}]
    return CheckReport(name, PASS if ok else FAIL, values, failures)


def check_valid_implies_complete(
    g: ExplanationFunction,
    model: LayeredModel,
    space: SampleSpace,
    epsilon: float,
    epsilon0: float,
    codomain_size: int = 2,
    resolution: float = DEFAULT_RESOLUTION,
    candidates: Sequence[Sequence[Any]] | None = None,
    cap: int | None = None,
) -> CheckReport:
    return valid_implies_complete_from_rv(
        ef_as_rv(g, model, space, resolution),
        model.labels_rv(space),
        epsilon,
        epsilon0,
        codomain_size,
        candidates,
        cap,
    )


def equivalence_report(
    model: LayeredModel,
    i: int,
    g: ExplanationFunction,
    space: SampleSpace,
    beta_curve: Callable[[float], float],
    gamma_curve: Callable[[float], float],
) -> CheckReport:
    """Pass iff both candidate moduli dominate the empirical ones at every breakpoint."""
    beta_hat = consistency_modulus(model, i, g, space)
    gamma_hat = explainability_modulus(model, i, g, space)
    failures = []
    for label, cand, emp in (("beta", beta_curve, beta_hat), ("gamma", gamma_curve, gamma_hat)):
        for eps, val in emp.breakpoints:
            if cand(eps) < val - INFO_TOL:
                failures.append({"curve": label, "epsilon": eps, "candidate": float(cand(eps)), "empirical": val})
    return CheckReport(
        "equivalence",
        FAIL if failures else PASS,
        {"layer": i, "beta_hat": beta_hat.to_dict(), "gamma_hat": gamma_hat.to_dict()},
        failures[:20],
    )
