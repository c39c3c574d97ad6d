import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from cvxrepair import cli
from cvxrepair.schema import dumps, parse_simproj
from cvxrepair.oracles import GridSpec, grid_argmin
from cvxrepair.simproj import objective

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"


def run(*argv):
    return cli.main([str(a) for a in argv])


def report(path):
    return json.loads(Path(path).read_text())


def test_linear_two_constraint_and_verify(tmp_path):
    out = tmp_path / "cert.json"
    assert run("linear", "--input", PROBLEMS / "twohalf.json", "--output", out) == 0
    doc = report(out)
    assert doc["schema"] == "cvxrepair-report" and doc["status"] == "converged"
    assert doc["solution"]["distance"] == pytest.approx(math.sqrt(2), abs=1e-12)
    assert run("verify", "--cert", out, "--input", PROBLEMS / "twohalf.json") == 0
    # the embedded copy of the problem is enough
    assert run("verify", "--cert", out) == 0


def test_threebox_matches_grid(tmp_path):
    out = tmp_path / "r.json"
    assert run("simproj", "--input", PROBLEMS / "threebox.json", "--output", out) == 0
    sol = report(out)["solution"]
    prob = parse_simproj(json.loads((PROBLEMS / "threebox.json").read_text()))
    x, v = grid_argmin(lambda X: objective(prob, X), GridSpec([-1, -1], [5, 5], rounds=4))
    np.testing.assert_allclose(sol["point"], x, atol=1e-4)
    assert sol["value"] == pytest.approx(v, abs=1e-6)
    assert run("verify", "--cert", out) == 0


def test_weighted_slab_example(tmp_path):
    out = tmp_path / "r.json"
    assert run("simproj", "--input", PROBLEMS / "slab.json", "--output", out) == 0
    sol = report(out)["solution"]
    assert sol["point"][0] == pytest.approx(0.4, abs=1e-9)
    assert sol["value"] == pytest.approx(0.64, abs=1e-9)
    assert sol["translation_norm"] == pytest.approx(0.8, abs=1e-9)


def test_cli_overrides_alpha_and_p(tmp_path):
    out = tmp_path / "r.json"
    assert run("simproj", "--input", PROBLEMS / "slab.json", "--output", out,
               "--alpha", "1,1", "--p", "1") == 0
    sol = report(out)["solution"]
    # p = 1 with equal weights: half the gap
    assert sol["value"] == pytest.approx(1.0, abs=1e-9)
    assert run("verify", "--cert", out) == 0


def test_bounds_command(tmp_path):
    out = tmp_path / "r.json"
    assert run("bounds", "--input", PROBLEMS / "expsys.json", "--output", out) == 0
    sol = report(out)["solution"]
    d = sol["residual_minimum"]["distance"]
    assert sol["lower"] - 1e-6 <= d <= sol["upper"] + 1e-6
    assert sol["bound_data"]["u_source"] == "given"
    assert run("verify", "--cert", out) == 0


def test_bounds_with_estimated_u_and_catalog_l(tmp_path):
    prob = json.loads((PROBLEMS / "expsys.json").read_text())
    prob["bounds"] = {"C": prob["bounds"]["C"]}
    inp = tmp_path / "p.json"
    inp.write_text(json.dumps(prob))
    out = tmp_path / "r.json"
    assert run("bounds", "--input", inp, "--output", out) == 0
    bd = report(out)["solution"]["bound_data"]
    assert bd["u_source"].startswith("estimated") and bd["l_source"] == "catalog"


def test_byte_determinism(tmp_path):
    for name, cmd in (("threebox.json", "simproj"), ("expsys.json", "bounds"),
                      ("squeeze4.json", "linear")):
        a, b = tmp_path / f"a_{name}", tmp_path / f"b_{name}"
        run(cmd, "--input", PROBLEMS / name, "--output", a, "--seed", 3)
        run(cmd, "--input", PROBLEMS / name, "--output", b, "--seed", 3)
        assert a.read_bytes() == b.read_bytes()


def test_tampered_certificate_fails_verification(tmp_path, capsys):
    out = tmp_path / "cert.json"
    run("linear", "--input", PROBLEMS / "twohalf.json", "--output", out)
    doc = report(out)
    doc["solution"]["h0"][0] += 1e-3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert run("verify", "--cert", bad) == cli.EXIT_VERIFY_FAILED
    assert "FAIL" in capsys.readouterr().out


def test_tampered_simproj_point_fails(tmp_path):
    out = tmp_path / "r.json"
    run("simproj", "--input", PROBLEMS / "threebox.json", "--output", out)
    doc = report(out)
    doc["solution"]["point"][0] += 1e-3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    assert run("verify", "--cert", bad) == cli.EXIT_VERIFY_FAILED


def test_budget_exhaustion_exit_code(tmp_path):
    out = tmp_path / "r.json"
    code = run("simproj", "--input", PROBLEMS / "threebox.json", "--output", out, "--max-iter", 1)
    assert code == cli.EXIT_NONCONVERGED
    assert report(out)["status"] == "nonconverged"


@pytest.mark.parametrize("content, cmd", [
    ("{not json", "linear"),
    ('{"kind": "cubic"}', "linear"),
    ('{"kind": "simproj", "sets": []}', "simproj"),
    ('{"kind": "linear-system", "A": [[0]], "b": [-1]}', "linear"),
    ('{"kind": "linear-system", "A": [[1]], "b": [1]}', "simproj"),
])
def test_bad_input_exit_code(tmp_path, content, cmd):
    inp = tmp_path / "p.json"
    inp.write_text(content)
    assert run(cmd, "--input", inp) == cli.EXIT_USAGE


def test_missing_file_and_bad_flags(tmp_path):
    assert run("linear", "--input", tmp_path / "nope.json") == cli.EXIT_USAGE
    assert run("linear", "--input", PROBLEMS / "twohalf.json", "--jobs", 0) == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        run("simproj", "--input", PROBLEMS / "slab.json", "--alpha", "a,b")
    assert info.value.code == 2


def test_overwrite_refused_without_force(tmp_path):
    out = tmp_path / "r.json"
    assert run("linear", "--input", PROBLEMS / "twohalf.json", "--output", out) == 0
    before = out.read_bytes()
    assert run("linear", "--input", PROBLEMS / "squeeze4.json", "--output", out) == cli.EXIT_USAGE
    assert out.read_bytes() == before
    assert run("linear", "--input", PROBLEMS / "squeeze4.json", "--output", out, "--force") == 0
    assert report(out)["solution"]["distance"] == pytest.approx(2.0)


def test_batch_with_jobs(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run("linear", "--input", PROBLEMS / "batch.json", "--output", a) == 0
    assert run("linear", "--input", PROBLEMS / "batch.json", "--output", b, "--jobs", 2) == 0
    assert a.read_bytes() == b.read_bytes()
    docs = report(a)["reports"]
    assert [d["solution"]["distance"] for d in docs] == pytest.approx([math.sqrt(2), 2.0, 0.0])
    assert run("verify", "--cert", a, "--input", PROBLEMS / "batch.json") == 0
    assert run("verify", "--cert", a, "--input", PROBLEMS / "twohalf.json") == cli.EXIT_USAGE


def test_environment_overrides(tmp_path, monkeypatch):
    out = tmp_path / "r.json"
    monkeypatch.setenv(cli.ENV_MAX_ITER, "1")
    assert run("simproj", "--input", PROBLEMS / "threebox.json", "--output", out) == cli.EXIT_NONCONVERGED
    # the flag wins over the environment
    out2 = tmp_path / "r2.json"
    assert run("simproj", "--input", PROBLEMS / "threebox.json", "--output", out2,
               "--max-iter", 100000) == 0
    monkeypatch.setenv(cli.ENV_TOL, "not-a-number")
    assert run("linear", "--input", PROBLEMS / "twohalf.json") == cli.EXIT_USAGE


def test_timing_is_opt_in(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run("linear", "--input", PROBLEMS / "twohalf.json", "--output", a)
    run("linear", "--input", PROBLEMS / "twohalf.json", "--output", b, "--timing")
    assert "wall_time_s" not in report(a)["diagnostics"]
    assert report(b)["diagnostics"]["wall_time_s"] >= 0


def test_stdout_report_and_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "cvxrepair", "linear", "--input",
                           str(PROBLEMS / "twohalf.json")], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["solution"]["h0"] == [1.0, 1.0]
    assert "distance=1.41421356237" in proc.stderr


def test_floats_keep_full_precision():
    text = dumps({"x": [0.1, 1 / 3], "y": float("inf"), "n": 3, "ok": True})
    back = json.loads(text)
    assert back["x"] == [0.1, 1 / 3]
    assert back["y"] == "inf" and back["n"] == 3 and back["ok"] is True
    assert "3.3333333333333331e-01" in text
