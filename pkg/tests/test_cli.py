import json
import subprocess
import sys

import pytest

from weakkam import cli

FAST = ["--builtin", "pendulum", "--resolution", "64"]


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_critical_writes_versioned_json(tmp_path, capsys):
    code, out, _ = run(capsys, "critical", *FAST, "--out", str(tmp_path))
    assert code == 0
    assert out.startswith("pendulum critical: c=1.0000")
    data = json.loads((tmp_path / "pendulum" / "critical" / "critical.json").read_text())
    assert data["report_version"] == cli.REPORT_VERSION
    assert data["command"] == "critical" and data["resolution"] == 64 and data["passed"]
    assert data["c"] == pytest.approx(1.0, abs=1e-3)
    assert set(data["checks"]["estimator_gap"]) >= {"value", "threshold", "passed"}


def test_failed_check_exits_2(tmp_path, capsys, monkeypatch):
    def failing(run_, folder):
        return {}, {"demo": cli._check(1.0, 0.0, False)}, "forced"

    monkeypatch.setitem(cli.HANDLERS, "solve", failing)
    code, out, _ = run(capsys, "solve", *FAST, "--out", str(tmp_path))
    assert code == 2
    assert "demo=FAIL -> FAIL" in out
    assert json.loads((tmp_path / "pendulum" / "solve" / "solve.json").read_text())["passed"] is False


def test_compute_error_exits_1(tmp_path, capsys, monkeypatch):
    def broken(run_, folder):
        raise ArithmeticError("Newton diverged")

    monkeypatch.setitem(cli.HANDLERS, "solve", broken)
    code, _, err = run(capsys, "solve", *FAST, "--out", str(tmp_path))
    assert code == 1 and "Newton diverged" in err


def test_schema_error_reports_path(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"builtin": "pendulum", "kernel": {"tau": 0}}))
    code, _, err = run(capsys, "barrier", "--config", str(cfg), "--out", str(tmp_path))
    assert code == 1 and "$.kernel.tau: must be positive" in err
    assert not (tmp_path / "bad").exists()


@pytest.mark.parametrize(
    "argv, needle",
    [
        (["solve", "--builtin", "nope"], "nope"),
        (["solve", "--builtin", "pendulum", "--tol", "-1"], "--tol"),
        (["solve", "--builtin", "pendulum", "--resolution", "2"], "--resolution"),
        (["sweep", "--builtin", "pendulum", "--lambda-schedule", "0.1,0.2"], "--lambda-schedule"),
        (["sweep", "--builtin", "pendulum", "--lambda-schedule", "0.1,x"], "--lambda-schedule"),
        (["solve"], "--config or --builtin"),
        (["solve", "--builtin", "pendulum", "--threads", "0"], "threads"),
    ],
)
def test_bad_arguments_exit_1(argv, needle, tmp_path, capsys):
    code, _, err = run(capsys, *argv, "--out", str(tmp_path))
    assert code == 1 and needle in err


def test_usage_errors_exit_1(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["frobnicate"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        cli.main(["solve", "--config", "a.json", "--builtin", "pendulum"])
    assert info.value.code == 1


def test_export_report_bundles_partial_run(tmp_path, capsys):
    assert run(capsys, "critical", *FAST, "--out", str(tmp_path))[0] == 0
    assert run(capsys, "mather", *FAST, "--out", str(tmp_path))[0] == 0
    code, out, _ = run(capsys, "export-report", str(tmp_path / "pendulum"))
    assert code == 0 and "2 commands" in out
    first = (tmp_path / "pendulum" / "report.json").read_bytes()
    rep = json.loads(first)
    assert rep["c"] == pytest.approx(1.0, abs=1e-3)
    assert rep["objective"] == pytest.approx(-1.0, abs=0.05)
    assert "barrier/barrier.json" in rep["absent"]
    # re-export is byte-identical; the scenario flags locate the same run
    assert run(capsys, "export-report", *FAST, "--out", str(tmp_path))[0] == 0
    assert (tmp_path / "pendulum" / "report.json").read_bytes() == first


def test_export_report_without_artifacts(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    code, _, err = run(capsys, "export-report", str(tmp_path / "empty"))
    assert code == 1
    assert "critical/critical.json" in err and "verify/verify.json" in err


def test_output_root_precedence(tmp_path, capsys, monkeypatch):
    env = tmp_path / "env"
    monkeypatch.setenv(cli.OUT_ENV, str(env))
    assert run(capsys, "solve", *FAST)[0] == 0
    assert (env / "pendulum" / "solve" / "solution.csv").exists()
    flag = tmp_path / "flag"
    assert run(capsys, "solve", *FAST, "--out", str(flag))[0] == 0
    assert (flag / "pendulum" / "solve" / "solution.csv").exists()


def test_thread_count_does_not_change_artifacts(tmp_path, capsys):
    for n in ("1", "2"):
        assert run(capsys, "barrier", *FAST, "--threads", n, "--out", str(tmp_path / n))[0] in (0, 2)
    a = (tmp_path / "1" / "pendulum" / "barrier" / "h.csv").read_bytes()
    b = (tmp_path / "2" / "pendulum" / "barrier" / "h.csv").read_bytes()
    assert a == b


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "weakkam", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "export-report" in out.stdout
