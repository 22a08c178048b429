import csv
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from mpccreg.suite import problem_files

DATA = Path(__file__).resolve().parents[1] / "src" / "mpccreg" / "data"
SUITE_SIZE = len(problem_files())


def run(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "mpccreg", *args], capture_output=True, text=True, cwd=cwd)


def field(out, key):
    for line in out.splitlines():
        if line.startswith(key):
            return line[len(key):].strip()
    raise AssertionError(f"{key} not in output")


def test_solve_p1():
    r = run("solve", str(DATA / "p1.mpcc"), "--scheme", "reg")
    assert r.returncode == 0
    assert field(r.stdout, "f*") == "0.000000E+00"
    assert field(r.stdout, "status") == "converged"
    for key in ("x*", "it_int", "it_ext", "stop reason"):
        field(r.stdout, key)


def test_solve_p3_reg_one():
    r = run("solve", str(DATA / "p3.mpcc"), "--scheme", "reg-one")
    assert r.returncode == 0 and field(r.stdout, "f*") == "5.000000E-01"


def test_solve_trace_and_json():
    r = run("solve", str(DATA / "p2.mpcc"), "--trace")
    assert r.returncode == 0
    rows = [l for l in r.stdout.splitlines() if l.strip() and l.split()[0].isdigit()]
    assert len(rows) == int(field(r.stdout, "it_ext"))
    d = json.loads(run("solve", str(DATA / "p2.mpcc"), "--json").stdout)
    assert d["status"] == "converged" and len(d["trace"]) == d["it_ext"]


def test_solve_nc_exit_code():
    r = run("solve", str(DATA / "p1.mpcc"), "--scheme", "reg-eq")
    assert r.returncode == 1 and field(r.stdout, "status") == "NC"


@pytest.mark.parametrize(
    "args",
    [
        ("solve", "P1", "--rho2", "1.5"),
        ("solve", "P1", "--scheme", "penalty"),
        ("solve", "P1", "--bogus"),
        ("solve", "missing.mpcc"),
        ("frobnicate",),
    ],
)
def test_usage_errors(args):
    args = [str(DATA / "p1.mpcc") if a == "P1" else a for a in args]
    r = run(*args)
    assert r.returncode == 2 and "error" in r.stderr


def test_bad_problem_file(tmp_path):
    bad = tmp_path / "bad.mpcc"
    bad.write_text("name: bad\nvars:\n  x 0 inf 1\nobjective: x +\n")
    assert run("solve", str(bad)).returncode == 2


def _csv_rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_bench_two_schemes(tmp_path):
    out = tmp_path / "r.csv"
    r = run("bench", "--suite", "builtin", "--schemes", "reg,reg-one", "--out", str(out), "--deterministic")
    assert r.returncode == 0 and "failures" in r.stdout
    rows = _csv_rows(out.read_text())
    assert len(rows) == 2 * SUITE_SIZE
    assert all(row["status"] == "converged" for row in rows)


def test_bench_all_schemes_and_profile(tmp_path):
    out = tmp_path / "all.csv"
    r = run("bench", "--schemes", "all", "--out", str(out), "--workers", "2")
    assert r.returncode == 0
    assert len(_csv_rows(out.read_text())) == 4 * SUITE_SIZE
    prof = run("profile", str(out), "--metric", "it_ext")
    assert prof.returncode == 0
    lines = prof.stdout.splitlines()
    assert lines[0] == "tau,reg,reg-one,reg-eq,reg-eq-one"
    assert all(len(l.split(",")) == 5 for l in lines)


def test_bench_dir_skips_malformed(tmp_path):
    for name in ("p1", "p3"):
        (tmp_path / f"{name}.mpcc").write_text((DATA / f"{name}.mpcc").read_text())
    (tmp_path / "broken.mpcc").write_text("vars:\n  x 0 1\n")
    r = run("bench", "--dir", str(tmp_path), "--schemes", "reg", "--deterministic")
    assert r.returncode == 0
    assert "broken.mpcc" in r.stderr
    assert [row["name"] for row in _csv_rows(r.stdout)] == ["p1", "p3"]


def test_bench_empty_dir(tmp_path):
    assert run("bench", "--dir", str(tmp_path)).returncode == 2


def test_bench_is_deterministic():
    a = run("bench", "--schemes", "reg", "--deterministic")
    b = run("bench", "--schemes", "reg", "--deterministic")
    assert a.returncode == 0 and a.stdout == b.stdout


def test_profile_columns_and_nc(tmp_path):
    text = (
        "name,n,m,p,q,scheme,f_star,it_int,it_ext,status\n"
        "a,0,0,0,1,reg,0.000000E+00,4,2,converged\n"
        "a,0,0,0,1,reg-eq,NC,,,NC\n"
        "b,0,0,0,1,reg,0.000000E+00,3,3,converged\n"
        "b,0,0,0,1,reg-eq,NC,,,NC\n"
    )
    path = tmp_path / "r.csv"
    path.write_text(text)
    r = run("profile", str(path), "--metric", "it_int")
    assert r.returncode == 0
    rows = _csv_rows(r.stdout)
    assert list(rows[0]) == ["tau", "reg", "reg-eq"]
    assert all(float(row["reg-eq"]) == 0.0 for row in rows)
    assert all(float(row["reg"]) == 1.0 for row in rows)


def test_profile_missing_metric_column(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("name,scheme,status\na,reg,converged\n")
    assert run("profile", str(path), "--metric", "it_int").returncode == 2
    assert run("profile", str(path), "--metric", "time").returncode == 2


def test_profile_it_ext_when_all_hit_the_ceiling(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text(
        "name,n,m,p,q,scheme,f_star,it_int,it_ext,status\n"
        + "".join(f"{p},0,0,0,1,{s},0,5,8,converged\n" for p in "abc" for s in ("reg", "reg-one"))
    )
    r = run("profile", str(path), "--metric", "it_ext")
    assert r.stdout.splitlines()[1:] == ["1,1,1"]


def test_check_p1(tmp_path):
    mult = tmp_path / "m.json"
    mult.write_text(json.dumps({"nu1": [1.0], "nu2": [1.0]}))
    p1 = str(DATA / "p1.mpcc")
    r = run("check", p1, "0,0", "--multipliers", str(mult))
    assert r.returncode == 0 and "strongly stationary:    yes" in r.stdout
    assert run("check", p1, "0,0").returncode == 0
    r = run("check", p1, "1,1")
    assert r.returncode == 1 and "feasible:               no" in r.stdout
    assert run("check", p1, "a,b").returncode == 2
    assert run("check", p1, "0,0,0").returncode == 2
    mult.write_text(json.dumps({"nu1": [1.0, 2.0]}))
    assert run("check", p1, "0,0", "--multipliers", str(mult)).returncode == 2


def test_check_json():
    d = json.loads(run("check", str(DATA / "p3.mpcc"), "1.5,0,0.5", "--json").stdout)
    assert d["is_strongly_stationary"] and d["licq_holds"]


def test_oracle_command():
    r = run("oracle", str(DATA / "p3.mpcc"))
    assert r.returncode == 0
    assert field(r.stdout, "best f*") == "5.000000E-01"
    assert r.stdout.count("branch ") == 2


def test_identical_invocations():
    args = ("solve", str(DATA / "chain5.mpcc"), "--trace")
    assert run(*args).stdout == run(*args).stdout


def test_log_env(tmp_path):
    import os

    env = {**os.environ, "MPCC_LOG": "INFO"}
    r = subprocess.run(
        [sys.executable, "-m", "mpccreg", "--deterministic", "solve", str(DATA / "p3.mpcc")],
        capture_output=True, text=True, env=env,
    )
    assert r.returncode == 0 and "INFO mpccreg.driver: outer k=0" in r.stderr


def test_console_script_installed():
    import shutil

    exe = shutil.which("mpccreg")
    if exe is None:
        pytest.skip("console script not on PATH")
    r = subprocess.run([exe, "solve", str(DATA / "p1.mpcc")], capture_output=True, text=True)
    assert r.returncode == 0
