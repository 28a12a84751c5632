"""Execute a parsed scenario and assemble its report."""

from __future__ import annotations

from typing import Any

from . import ef_algebra as alg
from . import info_bounds as ib
from . import property_checkers as pc
from .ef_kit import ef_as_rv
from .errors import EfxError, ResourceError
from .model_graph import check_jacobians, lipschitz_estimate, margin_check
from .prob_core import entropy, mutual_information
from .report import digest, finalize
from .scenario import Scenario, candidate_curve

COMPUTED = "computed"
ERROR = "error"

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class _Context:
    def __init__(self, sc: Scenario):
        self.sc = sc
        self._rvs: dict = {}

    def rv(self, name: str):
        if name not in self._rvs:
            if name == "h":
                self._rvs[name] = self.sc.model.labels_rv(self.sc.space)
            else:
                self._rvs[name] = ef_as_rv(self.sc.efs[name], self.sc.model, self.sc.space, self.sc.resolutions[name])
        return self._rvs[name]

    def decomposition(self, spec: Any, g1, g2):
        if spec is None or spec == "gk":
            return alg.gk_intersection(g1, g2)
        if isinstance(spec, dict) and {"e1", "u", "e2"} <= set(spec):
            return alg.decomposition_from_values(g1, g2, spec["e1"], spec["u"], spec["e2"])
        raise EfxError("decomposition must be 'gk' or an object with per-point e1, u, e2")


def _bound(report: ib.BoundReport) -> tuple[str, dict]:
    return (pc.PASS if report.satisfied else pc.FAIL), report.to_dict()


def _check(report: pc.CheckReport) -> tuple[str, dict]:
    values = dict(report.values)
    if report.failures:
        values["failures"] = report.failures
    return report.status, values


def _run_one(ctx: _Context, kind: str, p: dict) -> tuple[str, Any]:
    sc = ctx.sc
    model, space = sc.model, sc.space
    f = float
    cands = p.get("candidates")
    k = p.get("codomain_size", 2)
    if kind == "entropy":
        return COMPUTED, {"entropy": entropy(ctx.rv(p["rv"]))}
    if kind == "mutual_information":
        return COMPUTED, {"mutual_information": mutual_information(ctx.rv(p["x"]), ctx.rv(p["y"]))}
    if kind == "fano_lower":
        x, y = ctx.rv(p["x"]), ctx.rv(p["y"])
        return _bound(ib.check_fano_lower(x, y, ib.map_decoder(y, x)))
    if kind == "mi_stability":
        return _bound(ib.check_mi_stability(ctx.rv(p["x"]), ctx.rv(p["y"]), ctx.rv(p["z"])))
    if kind == "fano_converse":
        decoder, rep = ib.check_fano_converse(ctx.rv(p["x"]), ctx.rv(p["y"]))
        status, values = _bound(rep)
        return status, {**values, "decoder": decoder.to_dict()}
    if kind == "lipschitz":
        return COMPUTED, lipschitz_estimate(model, p["from"], p["to"], space).to_dict()
    if kind == "jacobian_check":
        jc = check_jacobians(model, space)
        return (pc.PASS if jc.passed else pc.FAIL), jc.to_dict()
    if kind == "margin_check":
        m = margin_check(model, space, f(p.get("delta", sc.delta or 0.0)))
        return (pc.PASS if m.passed else pc.FAIL), m.to_dict()
    if kind == "consistency_modulus":
        return COMPUTED, pc.consistency_modulus(model, p["layer"], sc.efs[p["ef"]], space).to_dict()
    if kind == "explainability_modulus":
        return COMPUTED, pc.explainability_modulus(model, p["layer"], sc.efs[p["ef"]], space).to_dict()
    if kind == "second_order_modulus":
        table = pc.second_order_modulus(
            model, p["layer"], sc.efs[p["ef"]], space, [f(v) for v in p["eps0"]], [f(v) for v in p["eps1"]]
        )
        return COMPUTED, table.to_dict()
    if kind == "consistency_propagation":
        return _check(pc.check_consistency_propagation(model, sc.efs[p["ef"]], p["i"], p["j"], space))
    if kind == "explainability_propagation":
        return _check(pc.check_explainability_propagation(model, sc.efs[p["ef"]], p["j"], p["i"], space))
    if kind == "gradient_explainability":
        delta = p.get("delta", sc.delta)
        if delta is None:
            raise EfxError("gradient_explainability needs delta (analysis or model.delta)")
        return _check(pc.check_gradient_ef_explainability(model, space, f(delta), p.get("split")))
    if kind == "validity":
        v = pc.validity_from_rv(ctx.rv(p["ef"]), ctx.rv("h"))
        out = v.to_dict()
        if "epsilon0" in p:
            ok = v.epsilon0 <= f(p["epsilon0"]) + pc.INFO_TOL
            return (pc.PASS if ok else pc.FAIL), {**out, "target": f(p["epsilon0"])}
        return COMPUTED, out
    if kind == "completeness":
        c = pc.completeness_from_rv(ctx.rv(p["ef"]), ctx.rv("h"), f(p["epsilon"]), k, cands)
        out = c.to_dict()
        if "alpha" in p:
            ok = c.alpha_hat >= f(p["alpha"]) - pc.INFO_TOL
            return (pc.PASS if ok else pc.FAIL), {**out, "target": f(p["alpha"])}
        return COMPUTED, out
    if kind == "valid_implies_complete":
        return _check(
            pc.valid_implies_complete_from_rv(
                ctx.rv(p["ef"]), ctx.rv("h"), f(p["epsilon"]), f(p["epsilon0"]), k, cands
            )
        )
    if kind == "equivalence":
        return _check(
            pc.equivalence_report(
                model, p["layer"], sc.efs[p["ef"]], space, candidate_curve(p["beta"]), candidate_curve(p["gamma"])
            )
        )
    g1 = ctx.rv(p["ef1"])
    g2 = ctx.rv(p["ef2"])
    if kind == "gk_intersection":
        return COMPUTED, alg.gk_intersection(g1, g2).to_dict()
    if kind == "verify_decomposition":
        dec = ctx.decomposition(p.get("decomposition"), g1, g2)
        status, values = _check(alg.verify_decomposition(dec, g1, g2, f(p["epsilon"])))
        return status, {**values, "decomposition": dec.to_dict()}
    if kind == "intersection_validity":
        dec = ctx.decomposition(p.get("decomposition"), g1, g2)
        return _check(
            alg.check_intersection_validity(
                dec, g1, g2, ctx.rv("h"), f(p["epsilon"]), f(p["epsilon0"]), f(p["alpha"]), k, cands
            )
        )
    if kind == "union_inheritance":
        dec = ctx.decomposition(p.get("decomposition"), g1, g2)
        return _check(
            alg.check_union_inheritance(
                dec, g1, g2, ctx.rv("h"), f(p["epsilon0"]), f(p["epsilon1"]), f(p["alpha"]), k, cands
            )
        )
    if kind == "intersection_uniqueness":
        dec_a = ctx.decomposition(p.get("decomposition_a"), g1, g2)
        dec_b = ctx.decomposition(p.get("decomposition_b"), g1, g2)
        return _check(alg.check_intersection_uniqueness(dec_a, dec_b, f(p["epsilon"])))
    raise EfxError(f"unhandled analysis kind {kind!r}")  # pragma: no cover


def run_scenario(sc: Scenario) -> tuple[dict, int]:
    """Run every analysis in declaration order; return (report, exit status).

    ResourceError propagates so the caller can exit 2 naming the cap.
    """
    ctx = _Context(sc)
    entries = []
    for a in sc.analyses:
        try:
            status, result = _run_one(ctx, a.kind, a.params)
        except ResourceError:
            raise
        except (EfxError, ValueError, KeyError) as exc:
            status, result = ERROR, {"error": type(exc).__name__, "message": str(exc)}
        entries.append(
            {"id": a.id, "kind": a.kind, "assertion": a.is_assertion, "params": a.params, "status": status, "result": result}
        )
    failed = [e["id"] for e in entries if e["status"] in (pc.FAIL, ERROR)]
    code = EXIT_FAIL if failed else EXIT_OK
    counts = {s: sum(e["status"] == s for e in entries) for s in (pc.PASS, pc.FAIL, pc.NOT_APPLICABLE, COMPUTED, ERROR)}
    body = {
        "command": "run",
        "scenario": sc.name,
        "scenario_digest": digest(sc.raw),
        "seed": sc.seed,
        "model": sc.model.to_dict(),
        "analyses": entries,
        "summary": {"total": len(entries), **counts, "failed_ids": failed},
        "exit_status": code,
    }
    return finalize(body), code
