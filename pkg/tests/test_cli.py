import json
import subprocess
import sys

import pytest

GMEAN = """
let u = heat(A=[[1]], mix=[(1.0, [0.0])]);
let v = wgm(1/2: u, 1/2: shift(u, [1.0]));
check v t=[0.1, 2.0, 10] box=[[-20, 21, 401]];
"""

ANISO_CONV = """
let a = heat(A=[[1, 0], [0, 2]], mix=[(1.0, [0.0, 0.0])]);
let c = conv(p=2, p1=4/3, p2=4/3, a, a);
check c t=[0.1, 1.0, 4] box=[[-8, 8, 41], [-8, 8, 41]];
"""


def run_cli(*args, env=None):
    import os

    full_env = dict(os.environ)
    if env:
        full_env.update(env)
    return subprocess.run(
        [sys.executable, "-m", "monoflow.cli", *args],
        capture_output=True, text=True, env=full_env,
    )


@pytest.fixture
def gmean_file(tmp_path):
    f = tmp_path / "gmean.mq"
    f.write_text(GMEAN)
    return f


def test_check_happy_path(gmean_file, tmp_path):
    out = tmp_path / "report.json"
    trace = tmp_path / "trace.csv"
    r = run_cli("check", str(gmean_file), "--out", str(out),
                "--trace", str(trace))
    assert r.returncode == 0, r.stderr
    report = json.loads(out.read_text())
    assert report["verdict"] == "pass"
    assert report["certificate"]["kind"] == "super"
    assert report["certificate"]["li_yau"] == [[1.0]]
    lines = trace.read_text().strip().split("\n")
    assert lines[0] == "t,F,delta,truncation_estimate"
    assert len(lines) == 11


def test_parse_error_exits_2(tmp_path):
    f = tmp_path / "bad.mq"
    f.write_text("let u = heat(A=[[1]], mix=[(1.0, [0.0])])")
    r = run_cli("check", str(f))
    assert r.returncode == 2
    assert "line" in r.stderr


def test_missing_file_exits_2():
    r = run_cli("check", "/nonexistent/program.mq")
    assert r.returncode == 2


def test_usage_error_exits_2():
    r = run_cli("scenario", "not-a-scenario")
    assert r.returncode == 2


def test_rule_rejection_exits_3(tmp_path):
    f = tmp_path / "aniso.mq"
    f.write_text(ANISO_CONV)
    r = run_cli("check", str(f))
    assert r.returncode == 3
    assert "convolution" in r.stderr
    assert "isotropic" in r.stderr


def test_list_scenarios():
    r = run_cli("list")
    assert r.returncode == 0
    names = r.stdout.split()
    for expected in ("counterexample", "hypercontractivity", "young",
                     "strichartz", "fisher-epi", "qp", "repeat", "lqnorm",
                     "regularized-bl", "ou-power", "dirichlet-entropy"):
        assert expected in names


def test_scenario_counterexample_exits_0(tmp_path):
    out = tmp_path / "ce.json"
    r = run_cli("scenario", "counterexample", "--out", str(out))
    assert r.returncode == 0, r.stderr
    report = json.loads(out.read_text())
    assert report["passed"] is True
    labels = {c["label"] for c in report["checks"]}
    assert "logconvexity-fails-everywhere" in labels
    assert "supersolution-everywhere" in labels


def test_thread_count_does_not_change_bytes(gmean_file, tmp_path):
    outs = []
    for threads in ("1", "8"):
        out = tmp_path / f"r{threads}.json"
        trace = tmp_path / f"t{threads}.csv"
        r = run_cli("check", str(gmean_file), "--out", str(out),
                    "--trace", str(trace), "--threads", threads)
        assert r.returncode == 0
        outs.append((out.read_bytes(), trace.read_bytes()))
    assert outs[0] == outs[1]


def test_repeat_runs_are_byte_identical(gmean_file, tmp_path):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    assert run_cli("check", str(gmean_file), "--out", str(a)).returncode == 0
    assert run_cli("check", str(gmean_file), "--out", str(b)).returncode == 0
    assert a.read_bytes() == b.read_bytes()
