import csv

import pytest
from click.testing import CliRunner

from shocklab import experiments as ex
from shocklab.cli import main

SMALL = ["--t-grid", "10,20", "--replicas", "20", "--no-timing"]


@pytest.fixture
def runner():
    return CliRunner()


def test_version(runner):
    res = runner.invoke(main, ["--version"])
    assert res.exit_code == 0 and "shocklab" in res.output


def test_verify_passing_run_exits_zero(runner, tmp_path):
    out = tmp_path / "dup.csv"
    res = runner.invoke(main, ["verify", "duality", "--m", "1,2", "--R", "-2,0,1", *SMALL, "--out", str(out)])
    assert res.exit_code == 0, res.output
    rows = ex.read_report(out)
    assert rows and all(r["pass"] for r in rows)


def test_verify_json_to_stdout(runner):
    import json

    res = runner.invoke(main, ["verify", "coupling_slack", "--p", "1", *SMALL, "--format", "json"])
    assert res.exit_code == 0
    rows = json.loads(res.stdout)
    assert list(rows[0]) == list(ex.COLUMNS) and rows[0]["pass"] == "true"


def test_verify_failing_check_exits_one(runner, tmp_path):
    out = tmp_path / "tail.csv"
    args = ["verify", "blocking_tail", "--p", "0.6", "--t-grid", "64", "--replicas", "30", "--tolerance", "0",
            "--out", str(out)]
    res = runner.invoke(main, args)
    assert res.exit_code == 1
    assert not ex.read_report(out)[0]["pass"]
    rep = runner.invoke(main, ["report", str(out)])
    assert rep.exit_code == 1 and "FAIL blocking_tail" in rep.output


def test_verify_stdout_is_reproducible(runner):
    args = ["verify", "cutoff", "--p", "0.75", "--m", "1", "--s-grid", "-0.5,0.5", *SMALL]
    a, b = runner.invoke(main, args), runner.invoke(main, args + ["--workers", "2"])
    assert a.stdout == b.stdout
    assert a.stdout.splitlines()[0] == ",".join(ex.COLUMNS)


@pytest.mark.parametrize(
    "args",
    [
        ["verify", "cutoff", "--p", "0.3"],
        ["verify", "cutoff", "--t-grid", "4,2"],
        ["verify", "cutoff", "--R", "X+1"],
        ["verify", "cutoff", "--m", "one"],
        ["verify"],
        ["simulate", "--t-grid", "5,1"],
        ["dist", "--s-grid", "2:1:0.5"],
    ],
)
def test_usage_errors_exit_two(runner, args):
    assert runner.invoke(main, args).exit_code == 2


def test_config_errors_carry_line_and_field(runner, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("kind: cutoff\nreplicas: 10\nnu: 2.0\n")
    res = runner.invoke(main, ["verify", "--config", str(cfg)])
    assert res.exit_code == 2
    assert f"{cfg}:3: field 'nu'" in res.stderr


def test_config_and_flag_override(runner, tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("kind: coupling_slack\np: [0.75]\nt_grid: [10]\nreplicas: 5\nrun:\n  timing: false\n")
    res = runner.invoke(main, ["verify", "--config", str(cfg), "--replicas", "7"])
    assert res.exit_code == 0
    row = next(csv.DictReader(res.stdout.splitlines()))
    assert row["n"] == "7" and row["wall_ms"] == ""


def test_numerics_flags_reach_the_spec(runner):
    args = ["verify", "dist_table", "--p", "0.75", "--m", "1", "--s-grid", "0", "--nodes", "80", "--length", "20",
            "--n-lambda", "64", "--no-timing"]
    res = runner.invoke(main, args)
    assert res.exit_code == 0, res.output
    row = next(csv.DictReader(res.stdout.splitlines()))
    assert abs(float(row["estimate"]) - 0.6684871137169075) < 1e-9


def test_numeric_failure_exits_three(runner, tmp_path):
    res = runner.invoke(main, ["dist", "--m", "2", "--p", "0.75", "--s-grid", "0", "--nodes", "6", "--tol", "1e-12",
                               "--out", str(tmp_path)])
    assert res.exit_code == 3
    assert "numeric error" in res.stderr


def test_dist_writes_tables(runner, tmp_path):
    res = runner.invoke(main, ["dist", "--m", "1,2", "--p", "1,0.75", "--s-grid", "-1:1:0.5", "--out", str(tmp_path)])
    assert res.exit_code == 0, res.output
    names = sorted(f.name for f in tmp_path.iterdir())
    assert names == ["F_M1_p0.75.csv", "F_M1_p1.csv", "F_M2_p0.75.csv", "F_M2_p1.csv"]


def test_simulate_dumps_positions(runner, tmp_path):
    out = tmp_path / "sim.csv"
    res = runner.invoke(main, ["simulate", "--ic", "step", "--p", "1", "--m", "2", "--t-grid", "0,5", "--replicas", "3",
                               "--out", str(out)])
    assert res.exit_code == 0, res.output
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 3 * 2 * 2
    assert [int(r["position"]) for r in rows[:2]] == [-1, -2]
    again = runner.invoke(main, ["simulate", "--ic", "step", "--p", "1", "--m", "2", "--t-grid", "0,5", "--replicas",
                                 "3", "--workers", "2"])
    assert again.stdout == out.read_text()


def test_report_rejects_tampered_flags(runner, tmp_path):
    out = tmp_path / "r.csv"
    ex.emit_report([ex.ReportRow("step_law", 1.0, 1, None, 100.0, None, 0.2, 0.0, 0.05, 10, 1)], out)
    text = out.read_text().replace("false", "true")
    out.write_text(text)
    assert runner.invoke(main, ["report", str(out)]).exit_code == 2
