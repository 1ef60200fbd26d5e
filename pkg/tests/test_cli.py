import csv
import json
import os
import subprocess
import sys

import pytest

from chcontrol.cli import main

SMALL = ["--set", "solver.n=64"]


def run(tmp_path, *argv, sub="out"):
    out = tmp_path / sub
    code = main([*argv, "--out-dir", str(out)])
    return code, out


def read_csv(path):
    return list(csv.DictReader(path.open()))


def test_simulate_zero_initial_is_flat(tmp_path):
    code, out = run(tmp_path, "simulate", *SMALL)
    assert code == 0
    rows = read_csv(out / "invariants.csv")
    assert len(rows) == 12
    assert {float(r["mean"]) for r in rows} == {0.0} and {float(r["energy"]) for r in rows} == {0.0}


def test_simulate_energy_drift(tmp_path, capsys):
    code, out = run(
        tmp_path, "simulate", "--set", "initial=0.1*sin(x)", "--set", "solver.n=256",
        "--set", "solver.rtol=1e-10", "--set", "solver.atol=1e-12", "--set", "snapshots=true",
    )
    assert code == 0
    rows = read_csv(out / "invariants.csv")
    assert abs(float(rows[-1]["energy_drift"])) < 1e-8
    assert "relative energy drift" in capsys.readouterr().out
    assert (out / "snapshots.bin").stat().st_size == 12 * (8 + 8 * 256)


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--set", "bogus=1"],
        ["simulate", "--set", "T=-1"],
        ["simulate", "--set", "initial=sin(("],
        ["simulate", "--set", "solver.n=48"],
        ["steer", "--set", "eps=0"],
    ],
)
def test_malformed_config_exits_1(tmp_path, capsys, argv):
    code, _ = run(tmp_path, *argv)
    assert code == 1
    assert capsys.readouterr().err.strip()


def test_malformed_config_file(tmp_path, capsys):
    bad = tmp_path / "cfg.json"
    bad.write_text("{not json")
    code, _ = run(tmp_path, "simulate", "--config", str(bad))
    assert code == 1 and capsys.readouterr().err


def test_simulate_blowup_exits_2(tmp_path):
    code, _ = run(tmp_path, "simulate", "--set", "initial=3*sin(x)", "--set", "solver.blowup_cap=5", *SMALL)
    assert code == 2


def test_saturate(tmp_path):
    code, out = run(tmp_path, "saturate", "--set", "max_m=2")
    assert code == 0
    rows = read_csv(out / "certificates.csv")
    assert [(r["mode"], r["leading_coefficient"]) for r in rows] == [("sin", "-3/5"), ("cos", "-6/5")]
    code, out = run(tmp_path, "saturate", sub="full")
    assert code == 0 and len(read_csv(out / "certificates.csv")) == 14
    code, _ = run(tmp_path, "saturate", "--set", "max_m=13", sub="cap")
    assert code == 1


def test_probe_limit(tmp_path):
    code, out = run(tmp_path, "probe-limit", *SMALL, "--set", "deltas=[0.1, 0.03, 0.01]", "--jobs", "2")
    assert code == 0
    doc = json.loads((out / "probe.json").read_text())
    assert doc["limit"] == {"a0": "0", "modes": [{"k": 1, "cos": "1/2", "sin": "0"}]}
    errs = [r["error"] for r in doc["rows"]]
    assert errs == sorted(errs, reverse=True)


def test_steer_fixed_time(tmp_path):
    code, out = run(tmp_path, "steer", "--set", "T=1", *SMALL)
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["final_error"] <= 0.05 and report["total_time_exact"] == "1"
    sched = json.loads((out / "schedule.json").read_text())
    assert all(set(seg) == {"dt", "c0", "ccos", "csin"} for seg in sched)
    assert (out / "plan.json").exists() and (out / "report.csv").exists()


def test_verify_subset(tmp_path, capsys):
    code, out = run(tmp_path, "verify", "--set", "criteria=[1, 2, 3]")
    assert code == 0
    assert capsys.readouterr().out.count("[PASS]") == 3
    assert len(read_csv(out / "verify.csv")) == 3


def test_outputs_deterministic(tmp_path):
    argv = ["steer", *SMALL, "--set", "target=0.1*sin(2x) + 0.05*cos(x)"]
    assert run(tmp_path, *argv, sub="a")[0] == 0
    assert run(tmp_path, *argv, sub="b")[0] == 0
    for name in ("plan.json", "schedule.json", "report.json", "report.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_writes_only_inside_out_dir(tmp_path, monkeypatch):
    work = tmp_path / "cwd"
    work.mkdir()
    monkeypatch.chdir(work)
    assert main(["simulate", *SMALL, "--out-dir", str(tmp_path / "dest")]) == 0
    assert main(["saturate", "--out-dir", str(tmp_path / "dest")]) == 0
    assert os.listdir(work) == []
    assert sorted(os.listdir(tmp_path)) == ["cwd", "dest"]


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "chcontrol.cli", "saturate", "--set", "max_m=3", "--out-dir", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0 and "certificates verified" in proc.stdout
