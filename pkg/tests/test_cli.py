import csv
import json
import subprocess
import sys

import pytest

from przanowski.cli import SUITES, run
from przanowski.manifolds import builtin

FAST = ["--samples", "20"]


@pytest.fixture(scope="module")
def bad_spec(tmp_path_factory):
    data = builtin("h4").to_json()
    data.update(name="bad", K="w*wb")
    path = tmp_path_factory.mktemp("specs") / "bad.json"
    path.write_text(json.dumps(data))
    return path


def report_of(tmp_path, argv):
    out = tmp_path / "r.json"
    code = run(argv + ["--out", str(out)])
    return code, json.loads(out.read_text())


def test_verify_h4(tmp_path):
    code, rep = report_of(tmp_path, ["verify", "--manifold", "h4", "--samples", "200", "--seed", "7", "--tol", "1e-9"])
    assert code == 0 and rep["passed"]
    names = {c["name"] for c in rep["checks"]}
    assert {"prz", "einstein", "weyl", "lax"} <= names
    assert rep["seed"] == 7 and rep["spec"]["name"] == "h4"


@pytest.mark.parametrize("name", ["s4", "cp2", "bergmann"])
def test_verify_other_manifolds(tmp_path, name):
    code, _ = report_of(tmp_path, ["verify", "--manifold", name] + FAST)
    assert code == 0


def test_extract_cp2(tmp_path, capsys):
    code, rep = report_of(tmp_path, ["extract", "--family", "cp2"] + FAST)
    assert code == 0
    check = [c for c in rep["checks"] if c["name"] == "extraction"][0]
    assert check["max_residual"] < 1e-10
    assert "extraction" in capsys.readouterr().out


@pytest.mark.parametrize("command", ["lax", "recursion", "perturb"])
def test_other_suites_pass_on_h4(tmp_path, command):
    code, rep = report_of(tmp_path, [command, "--manifold", "h4"] + FAST)
    assert code == 0 and all(c["passed"] for c in rep["checks"])


@pytest.mark.parametrize("command", sorted(SUITES))
def test_negative_control_fails_every_suite(bad_spec, tmp_path, capsys, command):
    code, rep = report_of(tmp_path, [command, "--manifold", f"file:{bad_spec}"] + FAST + ["--grid", "9"])
    assert code == 1
    prz = [c for c in rep["checks"] if c["name"] == "prz"][0]
    assert not prz["passed"] and prz["max_residual"] > 0
    assert "failed check: prz" in capsys.readouterr().err


def test_unknown_flag_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        run(["verify", "--bogus"])
    assert info.value.code == 2


def test_unknown_manifold_is_a_usage_error():
    assert run(["verify", "--manifold", "t4"] + FAST) == 2


def test_recursion_refuses_cp2_lines():
    assert run(["recursion", "--manifold", "cp2"] + FAST) == 2


def test_report_is_deterministic_apart_from_wall_time(tmp_path):
    argv = ["lax", "--manifold", "s4", "--seed", "3"] + FAST
    _, a = report_of(tmp_path, argv)
    _, b = report_of(tmp_path, argv)
    a.pop("wall_time"), b.pop("wall_time")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_parallel_jobs_give_the_same_report(tmp_path):
    _, a = report_of(tmp_path, ["verify", "--manifold", "cp2"] + FAST)
    _, b = report_of(tmp_path, ["verify", "--manifold", "cp2", "--jobs", "3"] + FAST)
    assert [c["max_residual"] for c in a["checks"]] == [c["max_residual"] for c in b["checks"]]


def test_solve_writes_solution_and_newton_report(tmp_path):
    out = tmp_path / "h4.json"
    assert run(["solve", "--family", "h4", "--out", str(out)]) == 0
    rows = list(csv.reader(open(tmp_path / "h4.csv")))
    assert rows[0] == ["rho", "sigma", "K_value"] and len(rows) == 17 * 17 + 1
    newton = json.loads((tmp_path / "h4.newton.json").read_text())
    assert newton["residuals"][-1] < 1e-10 and newton["deviation"] < 5e-4


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "przanowski.cli", "verify", "--manifold", "h4", "--samples", "5"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "overall: pass" in proc.stdout
