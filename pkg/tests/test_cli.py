import csv
import io
import json
import math
import os
import subprocess
import sys

import pytest

from corrcox import cli
from corrcox.compensators import CompensatorTable


def run(capsys, *argv):
    try:
        code = cli.main([str(a) for a in argv])
    except SystemExit as exc:
        code = exc.code
    out = capsys.readouterr()
    return code, out.out, out.err


def write_spec(tmp_path, doc, name="spec.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def shared_doc():
    return json.loads((cli_specs() / "shared_driver.json").read_text(encoding="utf-8"))


def cli_specs():
    from pathlib import Path

    return Path(__file__).resolve().parents[1] / "demos" / "specs"


def test_survival_shared_driver(capsys, specs):
    code, out, _ = run(capsys, "survival", specs / "shared_driver.json", "--horizons", "1,2")
    assert code == 0
    doc = json.loads(out)
    res = doc["results"]
    assert abs(res["joint_survival"] - math.exp(-2.5)) <= 1e-12 * math.exp(-2.5)
    assert res["residual"] <= 1e-12
    assert doc["command"] == "survival" and doc["model_type"] == "factor"


def test_survival_at_zero_horizons(capsys, specs):
    code, out, _ = run(capsys, "survival", specs / "shared_driver.json", "--horizons", "0,0")
    assert code == 0 and json.loads(out)["results"]["joint_survival"] == 1.0


def test_malformed_spec_names_the_key(capsys, tmp_path):
    doc = shared_doc()
    doc["factors"][0]["intensty"] = 2.0
    code, out, err = run(capsys, "survival", write_spec(tmp_path, doc))
    assert code == 2 and out == ""
    assert "intensty" in err


def test_lenient_flag_warns(capsys, tmp_path):
    doc = shared_doc()
    doc["notes"] = "hello"
    code, out, err = run(capsys, "survival", write_spec(tmp_path, doc), "--lenient", "--horizons", "1,2")
    assert code == 0 and "notes" in err
    assert json.loads(out)["model_hash"] == json.loads(
        run(capsys, "survival", cli_specs() / "shared_driver.json")[1]
    )["model_hash"]


def test_bad_horizons(capsys, specs):
    assert run(capsys, "survival", specs / "shared_driver.json", "--horizons", "1")[0] == 2
    assert run(capsys, "survival", specs / "shared_driver.json", "--horizons", "1,x")[0] == 2
    assert run(capsys, "survival", specs / "shared_driver.json", "--horizons=-1,1")[0] == 2


def test_capacity_error(capsys, tmp_path):
    n = 21
    doc = {
        "model_type": "factor",
        "components": n,
        "factors": [{"kind": "compound_poisson", "intensity": 1.0, "jumps": {"kind": "constant", "size": 1.0}}],
        "loadings": [[1.0]] * n,
    }
    code, _, err = run(capsys, "survival", write_spec(tmp_path, doc))
    assert code == 3 and "20" in err


def test_mo_rates_shared_driver(capsys, specs):
    code, out, _ = run(capsys, "mo-rates", specs / "shared_driver.json")
    assert code == 0
    res = json.loads(out)["results"]
    assert list(res["rates"]) == ["[1]", "[2]", "[1,2]"]
    for v in res["rates"].values():
        assert abs(v - 0.5) <= 1e-12
    assert max(abs(r) for r in res["marginal_residuals"]) <= 1e-12
    assert res["negative_rates"] == []


def test_mo_rates_independent_three(capsys, tmp_path):
    doc = {
        "model_type": "factor",
        "components": 3,
        "factors": [
            {"kind": "compound_poisson", "intensity": 1.0, "jumps": {"kind": "exponential", "rate": 1.0}},
            {"kind": "gamma_subordinator", "shape_rate": 1.0, "scale_rate": 2.0},
            {"kind": "compound_poisson", "intensity": 0.5, "jumps": {"kind": "constant", "size": 2.0}},
        ],
        "loadings": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
    }
    code, out, _ = run(capsys, "mo-rates", write_spec(tmp_path, doc))
    assert code == 0
    rates = json.loads(out)["results"]["rates"]
    for key, v in rates.items():
        if "," in key:
            assert v == 0.0
    assert math.isclose(rates["[1]"], 0.5, rel_tol=1e-14)
    assert math.isclose(rates["[2]"], math.log(1.5), rel_tol=1e-14)


def test_mo_rates_power_clock_is_unsupported(capsys, tmp_path):
    doc = shared_doc()
    doc["deformation"] = {"kind": "power", "exponent": 2.0, "scale": 1.0}
    assert run(capsys, "mo-rates", write_spec(tmp_path, doc))[0] == 5


def test_mo_rates_shot_noise_is_unsupported(capsys, specs):
    assert run(capsys, "mo-rates", specs / "shot_noise_pair.json")[0] == 5


def test_mo_rates_min_decomposition_adds_linear_hazards(capsys, tmp_path):
    doc = shared_doc()
    doc.pop("description")
    doc.update(model_type="min_decomposition", continuous_part=[{"kind": "linear", "rate": 0.25}, {"kind": "zero"}])
    code, out, _ = run(capsys, "mo-rates", write_spec(tmp_path, doc))
    rates = json.loads(out)["results"]["rates"]
    assert code == 0 and rates["[1]"] == 0.75 and rates["[2]"] == 0.5


def test_simulate_path_minimum(capsys, specs):
    code, _, err = run(capsys, "simulate", specs / "shared_driver.json", "--paths", "10")
    assert code == 2 and "paths below minimum" in err


def test_simulate_tail_bound(capsys, specs):
    code, _, err = run(capsys, "simulate", specs / "shared_driver.json", "--paths", "2000", "--horizon", "0.5")
    assert code == 4


def test_simulate_estimates(capsys, specs):
    code, out, _ = run(capsys, "simulate", specs / "shared_driver.json", "--paths", "20000", "--seed", "7", "--horizons", "1,2")
    assert code == 0
    res = json.loads(out)["results"]
    js = res["joint_survival"]
    for key in ("rao_blackwell", "indicator"):
        assert abs(js[key]["value"] - js["analytic"]) <= 4 * js[key]["stderr"]
        assert js[key]["paths"] == 20000 and js[key]["seed"] == 7
    sim = res["simultaneous"]
    assert abs(sim["analytic"] - 1 / 3) <= 1e-12
    for key in ("rao_blackwell", "indicator"):
        assert abs(sim[key]["value"] - sim["analytic"]) <= 4 * sim[key]["stderr"]


def test_simulate_other_models_have_null_simultaneous(capsys, specs):
    code, out, _ = run(capsys, "simulate", specs / "three_factor.json", "--paths", "2000")
    assert code == 0 and json.loads(out)["results"]["simultaneous"] is None


def test_shotnoise_command(capsys, specs):
    code, out, _ = run(capsys, "shotnoise", specs / "shot_noise_pair.json", "--horizons", "1.5,1.5")
    assert code == 0
    res = json.loads(out)["results"]
    assert len(res["compensators"]) == 3
    assert math.isclose(res["joint_survival"], res["bivariate_survival"], rel_tol=1e-14)
    # Tied horizons: the formula and the exact law coincide for monotone kernels.
    assert res["monotone_kernels"] is True
    assert math.isclose(res["joint_survival"], res["exact_joint_survival"], rel_tol=1e-9)


def test_shotnoise_rejects_factor_specs(capsys, specs):
    assert run(capsys, "shotnoise", specs / "shared_driver.json")[0] == 5


@pytest.mark.parametrize("command", ["survival", "mo-rates", "shotnoise", "simulate", "validate"])
def test_json_keys_depend_only_on_command(capsys, tmp_path, command):
    # Same structure, different parameter values.
    spec = "shot_noise_pair.json" if command == "shotnoise" else "shared_driver.json"
    base = json.loads((cli_specs() / spec).read_text(encoding="utf-8"))
    other = json.loads(json.dumps(base).replace("1.0", "1.7"))
    extra = ["--paths", "1000"] if command in ("simulate", "validate") else []

    def shape(x):
        if isinstance(x, dict):
            return {k: shape(v) for k, v in x.items()}
        if isinstance(x, list):
            return [shape(v) for v in x[:1]]
        return type(x).__name__ if not isinstance(x, (int, float)) or isinstance(x, bool) else "number"

    a = json.loads(run(capsys, command, write_spec(tmp_path, base, "a.json"), *extra)[1])
    b = json.loads(run(capsys, command, write_spec(tmp_path, other, "b.json"), *extra)[1])
    assert shape(a) == shape(b)


def test_csv_round_trips_json(capsys, specs):
    args = ["simulate", specs / "three_factor.json", "--paths", "3000", "--seed", "3"]
    _, js, _ = run(capsys, *args)
    _, text, _ = run(capsys, *args, "--format", "csv")
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["key", "value"]
    table = dict(rows[1:])
    doc = json.loads(js)

    def walk(prefix, v):
        if isinstance(v, dict):
            for k, x in v.items():
                yield from walk(f"{prefix}.{k}" if prefix else k, x)
        elif isinstance(v, list):
            for i, x in enumerate(v):
                yield from walk(f"{prefix}.{i}", x)
        else:
            yield prefix, v

    leaves = list(walk("", doc))
    assert len(leaves) == len(table)
    for key, v in leaves:
        cell = table[key]
        if isinstance(v, bool) or v is None or isinstance(v, str):
            continue
        assert float(cell) == v


def test_out_file_for_validate(capsys, tmp_path, specs):
    out = tmp_path / "report.json"
    code, stdout, _ = run(capsys, "validate", specs / "shared_driver.json", "--paths", "5000", "--out", out)
    assert code == 0
    report = json.loads(out.read_text(encoding="utf-8"))
    assert report["passed"] and report["failures"] == []
    assert report["wall_clock_seconds"] >= 0
    assert "wall_clock_seconds" not in json.loads(stdout)
    names = [r["name"] for r in report["results"]]
    assert "mo_representability" in names and "simultaneous_indicator" in names
    assert report["argv"][:2] == ["corrcox", "validate"]


def test_validate_zero_loadings_row(capsys, tmp_path):
    doc = shared_doc()
    doc["loadings"] = [[1.0], [0.0]]
    assert run(capsys, "validate", write_spec(tmp_path, doc))[0] == 2


def test_validate_flags_negative_interaction_rate(capsys, monkeypatch, specs):
    import corrcox.checks

    # Marginals 1 and 1 with a pair compensator of 2.5 need a negative pair rate.
    monkeypatch.setattr(corrcox.checks, "build_table", lambda model: CompensatorTable(2, [0.0, 1.0, 1.0, 2.5]))
    code, out, err = run(capsys, "validate", specs / "shared_driver.json", "--paths", "2000")
    assert code == 1
    report = json.loads(out)
    flagged = [r for r in report["results"] if r["name"] == "mo_representability"][0]
    assert not flagged["passed"] and "[1,2]" in flagged["detail"]
    assert "mo_representability" in report["failures"] and "mo_representability" in err


@pytest.mark.parametrize("spec", ["three_factor.json", "shot_noise_pair.json", "min_decomposition.json"])
def test_validate_bundled_specs(capsys, specs, spec):
    code, out, _ = run(capsys, "validate", specs / spec, "--paths", "20000")
    assert code == 0, json.loads(out)["failures"]


def test_missing_file(capsys, tmp_path):
    assert run(capsys, "survival", tmp_path / "nope.json")[0] == 2


def test_subprocess_determinism(tmp_path, specs):
    cmd = [sys.executable, "-m", "corrcox.cli", "simulate", str(specs / "three_factor.json"), "--paths", "4000", "--seed", "11"]
    env = dict(os.environ, CORRCOX_THREADS="1")
    a = subprocess.run(cmd, capture_output=True, env=env, check=True).stdout
    b = subprocess.run(cmd, capture_output=True, env=env, check=True).stdout
    env["CORRCOX_THREADS"] = "8"
    c = subprocess.run(cmd, capture_output=True, env=env, check=True).stdout
    assert a == b == c and a
