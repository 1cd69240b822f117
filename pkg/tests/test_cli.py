import json
import subprocess
import sys

import pytest

from hypcyl import cli


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_branching_table_example(capsys):
    code, out, _ = run(["branching-table", "--u", "0.1", "--R", "2", "--n-max", "5"], capsys)
    assert code == 0
    body = [l for l in out.splitlines() if not l.startswith("#")]
    assert body[0].startswith("n,R,u,f_n,F_n,subcritical_bound,supercritical_lower")
    F = [float(l.split(",")[4]) for l in body[1:]]
    assert F[:3] == pytest.approx([0.2, 0.04, 0.0093333], abs=1e-7)
    assert "subcritical" in body[1]


def test_line_measure_example(capsys):
    code, out, _ = run(["line-measure", "--d", "2", "--r", "1"], capsys)
    assert code == 0
    assert float(out.splitlines()[-1].split(",")[-1]) == pytest.approx(6.2831853, abs=1e-7)


def test_geo_dist_example_json(capsys):
    code, out, _ = run(["geo-dist", "--ball", "0,0", "--ball", "0.5,0", "--format", "json"], capsys)
    assert code == 0
    doc = json.loads(out)
    assert set(doc) == {"config", "results"}
    assert doc["results"][0]["distance"] == pytest.approx(1.0986123, abs=1e-7)


@pytest.mark.parametrize("argv", [
    ["line-measure", "--d", "1", "--r", "1"],
    ["line-measure", "--d", "2"],
    ["geo-dist", "--ball", "0,0"],
    ["geo-dist", "--ball", "0,0", "--ball", "1.5,0"],
    ["nonsense"],
    [],
    ["phase-scan", "--u-grid", "1,0.5"],
])
def test_usage_errors_exit_2(argv, capsys):
    code, _, _ = run(argv, capsys)
    assert code == 2


def test_numeric_failure_exit_1(capsys):
    code, _, err = run(["net-build", "--r", "5", "--budget", "50", "--n-verify", "2000"], capsys)
    assert code == 1
    assert "numeric failure" in err


def test_config_header_present(capsys):
    _, out, _ = run(["tau-bins", "--x", "2", "--l-max", "2", "--n", "3000", "--seed", "4"], capsys)
    head = [l for l in out.splitlines() if l.startswith("#")]
    assert head[1].startswith(cli.ARGV_PREFIX)
    assert "# seed=4" in head


@pytest.mark.parametrize("argv", [
    ["tau-bins", "--x", "1,2", "--l-max", "3", "--n", "4000", "--seed", "9"],
    ["branching-sim", "--u", "0.1", "--R", "2", "--reps", "2000", "--seed", "3"],
    ["connect-m", "--u", "0.05", "--R", "3", "--reps", "50", "--workers", "2"],
    ["line-sample", "--d", "3", "--r", "2", "--n", "5", "--format", "json"],
    ["kernel-check", "--kernel", "tau", "--K", "2", "--L", "1", "--n-per-bin", "2000"],
])
def test_replay_reproduces_file(argv, tmp_path, capsys):
    path = tmp_path / "out.txt"
    code, _, _ = run(argv + ["--out", str(path)], capsys)
    assert code == 0
    first = path.read_text()
    assert cli.argv_from_file(str(path)) == argv
    code, again, _ = run(["--replay", str(path)], capsys)
    assert code == 0
    assert again == first


def test_replay_missing_header(tmp_path, capsys):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    assert run(["--replay", str(p)], capsys)[0] == 2


@pytest.mark.parametrize("argv", [
    ["connect-one", "--u", "0.01", "--R", "3", "--n", "20000"],
    ["phase-scan", "--u-grid", "0:1:0.5", "--reps", "2", "--window", "3"],
    ["eta-sim", "--u", "0.05", "--reps", "10", "--gens", "2"],
    ["growth-compare", "--u", "0.01", "--reps", "30", "--gens", "2"],
    ["net-build", "--r", "2", "--n-verify", "5000"],
    ["kernel-check", "--kernel", "mu", "--u", "0.5"],
    ["line-measure", "--d", "3", "--r", "2", "--n", "5000"],
    ["geo-dist", "--hyp", "1,0,0", "--hyp", "1.5430806348152437,1.1752011936438014,0"],
])
def test_commands_run(argv, capsys):
    code, out, _ = run(argv, capsys)
    assert code == 0
    assert out.startswith("# hypcyl")


def test_acceptance_subset(capsys):
    code, out, err = run(["acceptance", "--only", "1,2,5"], capsys)
    assert code == 0
    assert err.count("[PASS]") == 3


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "hypcyl", "line-measure", "--d", "2", "--r", "1"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "6.28318530718" in res.stdout
