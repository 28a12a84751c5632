import csv
import itertools
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from efx import fixtures
from efx.cli import main
from efx.ef_kit import gradient_ef
from efx.report import curve_csv, emit_curves
from efx.scenario import ScenarioError, load_scenario, parse_scenario

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "efx" / "scenarios"
DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"


def run(tmp_path, scenario, name="report.json"):
    out = tmp_path / name
    return main(["run", str(scenario), "--out", str(out)]), out


def test_bundled_xor_bits_exits_zero(tmp_path):
    code, out = run(tmp_path, SCENARIOS / "xor-bits.json")
    assert code == 0
    report = json.loads(out.read_text())
    status = {a["id"]: a["status"] for a in report["analyses"]}
    assert status["decomposition"] == status["intersection_validity"] == status["union"] == "pass"
    assert status["uniqueness_relabeled"] == "pass"
    iv = next(a for a in report["analyses"] if a["id"] == "intersection_validity")
    assert float(iv["result"]["epsilon1"]) == pytest.approx(0.1354627686921348, rel=1e-15)


def test_xor_bits_matches_golden(tmp_path):
    _, out = run(tmp_path, SCENARIOS / "xor-bits.json")
    assert out.read_bytes() == (GOLDEN / "xor-bits.report.json").read_bytes()


@pytest.mark.parametrize("name", ["two-bit-square", "shifted-identity"])
def test_other_bundled_scenarios_pass(tmp_path, name):
    code, _ = run(tmp_path, SCENARIOS / f"{name}.json")
    assert code == 0


def test_identical_heads_exit_one(tmp_path):
    code, out = run(tmp_path, DATA / "identical-heads.json")
    assert code == 1
    report = json.loads(out.read_text())
    margin, grad = report["analyses"]
    assert margin["status"] == "fail" and float(margin["result"]["min_separation"]) == 0.0
    assert grad["status"] == "error" and grad["result"]["error"] == "PreconditionError"
    assert report["exit_status"] == 1


def test_malformed_file_exit_two(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"space": {"points": [[0], [1]]},\n "model": ')
    code, out = run(tmp_path, bad)
    assert code == 2 and not out.exists()
    assert "line 2" in capsys.readouterr().err


def test_missing_file_exit_two(tmp_path):
    assert run(tmp_path, tmp_path / "nope.json")[0] == 2


def test_resource_cap_exit_two(tmp_path, capsys):
    code, _ = run(tmp_path, DATA / "over-cap.json")
    assert code == 2
    assert "enumeration cap 1000000" in capsys.readouterr().err


def test_cap_override_by_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("EFX_ENUM_CAP", "5")
    code, _ = run(tmp_path, SCENARIOS / "two-bit-square.json")
    assert code == 2
    assert "cap 5" in capsys.readouterr().err


def base_scenario():
    return json.loads((SCENARIOS / "xor-bits.json").read_text())


@pytest.mark.parametrize(
    "mutate, path",
    [
        (lambda s: s["analyses"][0].update(kind="nonsense"), "analyses[0].kind"),
        (lambda s: s["analyses"][5].update(ef1="missing"), "analyses[5].ef1"),
        (lambda s: s["analyses"][5].update(epsilon=-1), "analyses[5].epsilon"),
        (lambda s: s["analyses"][5].pop("epsilon"), "analyses[5].epsilon"),
        (lambda s: s["analyses"][5].update(extra=1), "analyses[5].extra"),
        (lambda s: s["model"]["layers"][0].update(matrix=[[0, 0], [1, 1]]), "model.layers[0]"),
        (lambda s: s["model"]["layers"][0].update(kind="relu"), "model.layers[0].kind"),
        (lambda s: s["space"].update(weights=[0.5] * 8), "space"),
        (lambda s: s["efs"]["g1"].update(values=[[0]] * 3), "efs.g1"),
        (lambda s: s["efs"]["g1"].update(resolution="abc"), "efs.g1.resolution"),
        (lambda s: s.pop("model"), "model"),
    ],
)
def test_validation_names_the_field(mutate, path):
    s = base_scenario()
    mutate(s)
    with pytest.raises(ScenarioError) as info:
        parse_scenario(s)
    assert info.value.path == path


def test_layer_index_out_of_range():
    s = json.loads((SCENARIOS / "shifted-identity.json").read_text())
    s["analyses"].append({"kind": "consistency_modulus", "layer": 4, "ef": "grad"})
    with pytest.raises(ScenarioError, match="exceeds model depth"):
        parse_scenario(s)


def test_reals_as_strings_and_grid():
    s = json.loads((SCENARIOS / "shifted-identity.json").read_text())
    s["model"]["delta"] = "1.0"
    sc = parse_scenario(s)
    assert sc.delta == 1.0 and sc.space.size == 400


def test_tabulated_layer_and_by_label(tmp_path):
    pts = [[0.0], [1.0], [2.0]]
    s = {
        "space": {"points": pts, "weights": ["0.25", "0.25", "0.5"]},
        "model": {
            "layers": [{"kind": "tabulated", "outputs": [[1, 0], [0, 1], [0, 2]]}, {"kind": "scale", "factor": 2}],
            "head": {"vectors": [[1, 0], [0, 1]], "labels": ["a", "b"]},
        },
        "efs": {"e": {"kind": "tabulated", "by_label": {"a": [[0], [0], [0]], "b": [[1], [1], [2]]}}},
        "analyses": [
            {"id": "H", "kind": "entropy", "rv": "e"},
            {"id": "v", "kind": "validity", "ef": "e", "epsilon0": 0},
            {"id": "j", "kind": "jacobian_check"},
        ],
    }
    path = tmp_path / "s.json"
    path.write_text(json.dumps(s))
    code, out = run(tmp_path, path)
    report = json.loads(out.read_text())
    assert code == 0
    assert float(report["analyses"][0]["result"]["entropy"]) == pytest.approx(1.5)


def test_every_analysis_kind_runs(tmp_path):
    fx = fixtures.tanh_hidden(steps=4)
    s = {
        "name": "all-kinds",
        "space": {"grid": {"ranges": [[-1, 1], [-1, 1]], "steps": [4, 4]}},
        "model": {
            "layers": [
                {"kind": "affine", "matrix": [[30, 0], [0, 1]], "offset": [0, 0]},
                {"kind": "tanh"},
                {"kind": "affine", "matrix": [[1, 0.5], [-1, 0.5]], "offset": [2, 2]},
            ],
            "head": {"vectors": [[1, 0], [0, 1]]},
            "delta": 2,
        },
        "efs": {"grad": {"kind": "gradient"}, "sgn": {"kind": "tabulated", "values": [[float(x[0] > 0)] for x in fx.space.points]}},
        "analyses": [
            {"kind": "entropy", "rv": "h"},
            {"kind": "mutual_information", "x": "h", "y": "sgn"},
            {"kind": "fano_lower", "x": "h", "y": "sgn"},
            {"kind": "mi_stability", "x": "grad", "y": "h", "z": "h"},
            {"kind": "fano_converse", "x": "h", "y": "grad"},
            {"kind": "lipschitz", "from": 0, "to": 3},
            {"kind": "jacobian_check"},
            {"kind": "margin_check"},
            {"kind": "consistency_modulus", "layer": 2, "ef": "grad"},
            {"kind": "explainability_modulus", "layer": 2, "ef": "grad"},
            {"kind": "second_order_modulus", "layer": 2, "ef": "grad", "eps0": [0, 1, "inf"], "eps1": [0, "inf"]},
            {"kind": "consistency_propagation", "ef": "grad", "i": 1, "j": 3},
            {"kind": "explainability_propagation", "ef": "grad", "j": 0, "i": 2},
            {"kind": "gradient_explainability", "split": 2},
            {"kind": "validity", "ef": "grad"},
            {"kind": "completeness", "ef": "sgn", "epsilon": 0.5, "candidates": [[0] * 16, [k % 2 for k in range(16)]]},
            {"kind": "valid_implies_complete", "ef": "sgn", "epsilon": 0.1, "epsilon0": 0.01, "candidates": [[0] * 16]},
            {"kind": "equivalence", "layer": 3, "ef": "grad", "beta": {"slope": 1e6, "intercept": 1e6}, "gamma": {"breakpoints": [[0, 1e6]]}},
            {"kind": "gk_intersection", "ef1": "grad", "ef2": "sgn"},
            {"kind": "verify_decomposition", "ef1": "grad", "ef2": "sgn", "epsilon": "inf"},
            {"kind": "intersection_validity", "ef1": "grad", "ef2": "sgn", "epsilon": 0, "epsilon0": 0.01, "alpha": 0.5, "candidates": [[0] * 16]},
            {"kind": "union_inheritance", "ef1": "grad", "ef2": "sgn", "epsilon0": 0.01, "epsilon1": 0, "alpha": 0.5, "candidates": [[0] * 16]},
            {"kind": "intersection_uniqueness", "ef1": "grad", "ef2": "sgn", "epsilon": 0},
        ],
    }
    path = tmp_path / "all.json"
    path.write_text(json.dumps(s))
    code, out = run(tmp_path, path)
    report = json.loads(out.read_text())
    errors = [a for a in report["analyses"] if a["status"] == "error"]
    assert not errors, errors
    assert code == (1 if report["summary"]["fail"] else 0)
    assert len(report["analyses"]) == len(s["analyses"])


def test_report_shape_and_digest(tmp_path):
    from efx.report import digest

    _, out = run(tmp_path, SCENARIOS / "xor-bits.json")
    report = json.loads(out.read_text())
    assert report["toolkit"] == "efx" and report["version"]
    assert report["scenario_digest"] == digest(base_scenario())
    body = {k: v for k, v in report.items() if k != "report_digest"}
    assert digest(body) == report["report_digest"]
    assert "timestamp" not in out.read_text()


# --- curves -------------------------------------------------------------------------

def test_curve_csv_examples():
    assert curve_csv([[1.0, 3.0]]).splitlines() == ["epsilon,value", "1,3"]
    assert curve_csv([]) == "epsilon,value\n"
    assert curve_csv([[0.1, 1 / 3]]).splitlines()[1] == "0.10000000000000001,0.33333333333333331"


def test_curves_command_matches_pair_scan(tmp_path):
    code, out = run(tmp_path, SCENARIOS / "shifted-identity.json")
    assert main(["curves", str(out), "--dir", str(tmp_path / "csv")]) == 0
    rows = list(csv.reader((tmp_path / "csv" / "beta_hat.csv").open()))
    assert rows[0] == ["epsilon", "value"]
    curve = [(float(e), float(v)) for e, v in rows[1:]]
    # independent scan: beta(eps) = max d_f over pairs with d_g <= eps
    fx = fixtures.shifted_identity()
    g = gradient_ef(fx.model)
    P = np.array([fx.model.pre_head(x) for x in fx.space.points])
    G = np.array([g(x, fx.model.label_of(x)) for x in fx.space.points])
    pairs = [
        (np.linalg.norm(G[a] - G[b]), np.linalg.norm(P[a] - P[b]))
        for a, b in itertools.combinations(range(fx.space.size), 2)
    ]
    for eps, val in curve:
        assert val == pytest.approx(max(df for dg, df in pairs if dg <= eps + 1e-12), abs=1e-12)
    # one label everywhere, so g is constant and every pair sits at d_g = 0
    assert curve == [(0.0, pytest.approx(2 * np.sqrt(2)))]


def test_curves_noop_without_curves(tmp_path, capsys):
    _, out = run(tmp_path, SCENARIOS / "xor-bits.json")
    assert main(["curves", str(out), "--dir", str(tmp_path / "none")]) == 0
    assert "no curves" in capsys.readouterr().out
    assert not (tmp_path / "none").exists()
    assert emit_curves({"analyses": []}, tmp_path / "none") == []


def test_curves_bad_report(tmp_path):
    bad = tmp_path / "r.json"
    bad.write_text("{")
    assert main(["curves", str(bad), "--dir", str(tmp_path)]) == 2


# --- verify ------------------------------------------------------------------------

def test_verify_unknown_suite():
    assert main(["verify", "thm9", "--seed", "1"]) == 2


def test_verify_bad_arguments():
    assert main(["verify", "all"]) == 2
    assert main([]) == 2


def test_verify_thm4(tmp_path):
    out = tmp_path / "v.json"
    assert main(["verify", "thm4", "--seed", "7", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    first = report["results"][0]
    assert first["status"] == "pass" and float(first["values"]["alpha_hat"]) == 0.5


def test_verify_lemmas_counts(tmp_path):
    out = tmp_path / "v.json"
    assert main(["verify", "lemmas", "--seed", "7", "--out", str(out)]) == 0
    report = json.loads(out.read_text())
    assert report["summary"] == {"total": 400, "pass": 400, "fail": 0, "not_applicable": 0}
    assert all(r["seed"] is not None for r in report["results"])


def test_module_entry_point(tmp_path):
    out = tmp_path / "r.json"
    proc = subprocess.run(
        [sys.executable, "-m", "efx", "run", str(SCENARIOS / "xor-bits.json"), "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.exists()


def test_load_scenario_from_disk():
    sc = load_scenario(SCENARIOS / "xor-bits.json")
    assert sc.name == "xor-bits" and len(sc.analyses) == 9
