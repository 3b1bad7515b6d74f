import csv
import json
import subprocess
import sys

import yaml

from lagsync.analysis import SUMMARY_FIELDS
from lagsync.cli import main

PAIR = {
    "version": 1,
    "name": "pair",
    "model": {"file": "two_link_arm.yaml"},
    "graph": {"kind": "ring", "p": 2},
    "gains": {"K1": 5.0, "K2": 2.0, "Lambda": 5.0},
    "trajectory": {"kind": "constant", "q": [0.3, -0.2]},
    "sim": {"dt": 1.0e-3, "t_final": 2.0, "seed": 0, "decimation": 10},
}


def _write(tmp_path, cfg, name="exp.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return str(path)


def _with(**kw):
    cfg = json.loads(json.dumps(PAIR))
    for k, v in kw.items():
        cfg[k] = v
    return cfg


def test_verify_gains_ring(capsys):
    assert main(["verify-gains", "--preset", "fig4"]) == 0
    out = capsys.readouterr().out
    assert "tracking_ok=True sync_ok=True" in out
    assert "joint 1 spectrum (1, 9, 5, 5)" in out


def test_verify_gains_indifferent(capsys):
    assert main(["verify-gains", "--preset", "fig6b", "--regime", "indifferent"]) == 0
    assert "regime=indifferent" in capsys.readouterr().out
    assert main(["verify-gains", "--preset", "fig6b", "--regime", "tracking"]) == 1


def test_verify_gains_decoupled(tmp_path, capsys):
    path = _write(tmp_path, _with(gains={"K1": 5.0, "K2": 0.0, "Lambda": 1.0}))
    assert main(["verify-gains", "--config", path, "--json"]) == 0
    doc = json.loads(capsys.readouterr().out.split("regime any")[0])
    assert doc[0]["report"]["D2_eigs"] == [5.0, 5.0]


def test_schema_violation_exit_code(tmp_path, capsys):
    path = _write(tmp_path, _with(gains={"K1": 5.0}))
    assert main(["verify-gains", "--config", path]) == 2
    assert "gains" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == 2
    assert main(["simulate", "--config", path, "--preset", "fig4"]) == 2
    assert main(["simulate"]) == 2


def test_simulate_writes_files(tmp_path):
    out = tmp_path / "run"
    assert main(["simulate", "--config", _write(tmp_path, PAIR), "--out", str(out)]) == 0
    rows = list(csv.reader(open(out / "log.csv")))
    assert rows[0] == ["t", "robot", "q1", "q2", "qd1", "qd2", "s1", "s2", "tau1", "tau2"]
    summary = list(csv.DictReader(open(out / "summary.csv")))
    assert tuple(summary[0]) == SUMMARY_FIELDS
    assert float(summary[0]["final_sync_err"]) < float(rows[1][2]) + 1.0
    assert float(summary[0]["lambda_sync"]) > 0


def test_simulate_is_deterministic(tmp_path):
    path = _write(tmp_path, PAIR)
    for d in ("a", "b"):
        assert main(["simulate", "--config", path, "--out", str(tmp_path / d), "--seed", "5"]) == 0
    for f in ("log.csv", "summary.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_dry_run_writes_nothing(tmp_path, capsys):
    out = tmp_path / "never"
    assert main(["simulate", "--config", _write(tmp_path, PAIR), "--out", str(out), "--dry-run"]) == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["sim"]["steps"] == 2000 and plan["gains_ok"]
    assert not out.exists()


def test_disturbed_run_still_synchronizes(tmp_path):
    out = tmp_path / "d"
    cfg = _with(sim={"t_final": 10.0, "seed": 1})
    assert main(["simulate", "--config", _write(tmp_path, cfg), "--out", str(out),
                 "--disturbance", "sinusoid:0.1"]) == 0
    row = next(csv.DictReader(open(out / "summary.csv")))
    assert float(row["final_sync_err"]) < 2e-2
    assert row["max_residual"] == "nan"


def test_failed_gain_check_needs_force(tmp_path, capsys):
    path = _write(tmp_path, _with(gains={"K1": 1.0, "K2": -3.0, "Lambda": 1.0},
                                  sim={"t_final": 0.05, "seed": 0}))
    assert main(["simulate", "--config", path]) == 2
    assert "--force" in capsys.readouterr().err
    assert main(["simulate", "--config", path, "--force"]) == 0


def test_blow_up_exit_code(tmp_path, capsys):
    path = _write(tmp_path, _with(gains={"K1": 5.0e4, "K2": 2.0e4, "Lambda": 50.0},
                                  sim={"dt": 0.01, "t_final": 5.0, "seed": 0}))
    assert main(["simulate", "--config", path]) == 3
    assert "last good t" in capsys.readouterr().err


def test_sweep(tmp_path):
    out = tmp_path / "sweep"
    path = _write(tmp_path, _with(sim={"t_final": 0.5, "seed": 10}))
    assert main(["simulate", "--config", path, "--out", str(out), "--sweep", "3", "--workers", "2"]) == 0
    rows = list(csv.DictReader(open(out / "summary.csv")))
    assert [r["run_id"] for r in rows] == ["pair-seed10", "pair-seed11", "pair-seed12"]
    assert all((out / f"seed{s}" / "log.csv").exists() for s in (10, 11, 12))


def test_reproduce_reports_failure(capsys):
    assert main(["reproduce", "--preset", "fig4", "--t-final", "2"]) == 4
    captured = capsys.readouterr()
    assert "FAIL sync_final" in captured.out
    assert "metrics:" in captured.err


def test_reproduce_dry_run(capsys):
    assert main(["reproduce", "--preset", "fig5", "--dry-run"]) == 0
    plan = json.loads(capsys.readouterr().out)
    assert [g["p"] for g in plan["groups"]] == [4, 3, 3]
    assert len(plan["checks"]) == 6


def test_console_script():
    res = subprocess.run([sys.executable, "-m", "lagsync.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "lagsync" in res.stdout
