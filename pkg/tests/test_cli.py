import csv
import json
import subprocess
import sys

import pytest

from gespkit.cli import main


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def run_args(out, *extra, env="pendulum", budget="3000", reps="3"):
    return ["run", "--env", env, "--budget", budget, "--reps", reps, "--grid", "5", "--out", str(out), *extra]


def test_run_writes_manifest_and_runs(tmp_path):
    assert main(run_args(tmp_path / "g")) == 0
    manifest = json.loads((tmp_path / "g" / "manifest.json").read_text())
    assert manifest["config"]["stopping"] == "gesp"
    assert manifest["config"]["budget_T"] == 3000
    rows = read_csv(tmp_path / "g" / "runs.csv")
    assert len(rows) == 15
    assert {r["experiment_id"] for r in rows} == {"pendulum"}
    assert (tmp_path / "g" / "runs.csv").read_bytes().count(b"\r") == 0


def test_run_is_byte_reproducible(tmp_path):
    main(run_args(tmp_path / "a"))
    main(run_args(tmp_path / "b"))
    assert (tmp_path / "a" / "runs.csv").read_bytes() == (tmp_path / "b" / "runs.csv").read_bytes()


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("GESP_SEED", "5")
    main(run_args(tmp_path / "env"))
    monkeypatch.delenv("GESP_SEED")
    main(run_args(tmp_path / "flag", "--seed", "5"))
    main(run_args(tmp_path / "zero"))
    env_bytes = (tmp_path / "env" / "runs.csv").read_bytes()
    assert env_bytes == (tmp_path / "flag" / "runs.csv").read_bytes()
    assert env_bytes != (tmp_path / "zero" / "runs.csv").read_bytes()


def test_bad_seed_environment_is_a_usage_error(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("GESP_SEED", "abc")
    assert main(run_args(tmp_path / "x")) == 2
    assert "GESP_SEED" in capsys.readouterr().err


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("# comment\nenv=pendulum\nbudget=3000\nreps=2\ngrid=5\nseed=9\n")
    assert main(["--config", str(cfg), "run", "--out", str(tmp_path / "c")]) == 0
    assert json.loads((tmp_path / "c" / "manifest.json").read_text())["config"]["base_seed"] == 9
    assert main(["--config", str(cfg), "run", "--seed", "4", "--out", str(tmp_path / "d")]) == 0
    assert json.loads((tmp_path / "d" / "manifest.json").read_text())["config"]["base_seed"] == 4
    bad = tmp_path / "bad.cfg"
    bad.write_text("no equals sign\n")
    assert main(["--config", str(bad), "run", "--out", str(tmp_path / "e")]) == 2
    assert main(["--config", str(tmp_path / "missing.cfg"), "run", "--out", str(tmp_path / "f")]) == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--env", "mujoco", "--budget", "1000", "--out", "OUT"],
        ["run", "--env", "pendulum", "--budget", "100", "--out", "OUT"],  # below t_max
        ["run", "--env", "pendulum", "--budget", "1000", "--t-grace", "1.5", "--out", "OUT"],
        ["run", "--env", "pendulum", "--budget", "1000", "--stopping", "bogus", "--out", "OUT"],
        ["run", "--env", "pendulum", "--budget", "1000", "--reps", "0", "--out", "OUT"],
        ["run", "--env", "pendulum", "--out", "OUT"],  # missing budget
        ["sweep-tgrace", "--env", "pendulum", "--budget", "1000", "--fractions", "0.1,2", "--out", "OUT"],
        ["frobnicate"],
    ],
)
def test_usage_errors_exit_2(tmp_path, argv):
    argv = [str(tmp_path / "o") if a == "OUT" else a for a in argv]
    assert main(argv) == 2
    assert not (tmp_path / "o" / "runs.csv").exists()


def test_runtime_errors_exit_1(tmp_path, capsys):
    assert main(["compare", "--a", str(tmp_path / "nope"), "--b", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "c")]) == 1
    assert main(["replay", "--archive", str(tmp_path / "nope"), "--out", str(tmp_path / "r")]) == 1
    assert "error" in capsys.readouterr().err


def test_compare_and_report(tmp_path):
    main(run_args(tmp_path / "g", "--stopping", "gesp"))
    main(run_args(tmp_path / "s", "--stopping", "standard"))
    assert main(["compare", "--a", str(tmp_path / "g"), "--b", str(tmp_path / "s"), "--out", str(tmp_path / "c")]) == 0
    rows = read_csv(tmp_path / "c" / "comparison.csv")
    assert len(rows) == 5
    assert all(r["significant"] in ("0", "1") for r in rows)
    ratios = read_csv(tmp_path / "c" / "ratio.csv")
    assert ratios[-1]["checkpoint_budget"] == "3000"
    assert float(ratios[-1]["ratio"]) >= 1.0

    assert main(["report", "--in", str(tmp_path / "g"), "--in", str(tmp_path / "s"), "--out", str(tmp_path / "rep")]) == 0
    report = read_csv(tmp_path / "rep" / "report.csv")
    assert {r["metric"] for r in report} == {"best_objective", "evaluations_started", "evaluations_full"}
    assert {r["statistic"] for r in report} == {"median", "q25", "q75"}
    assert len(report) == 2 * 3 * 5 * 3


def test_compare_rejects_different_grids(tmp_path):
    main(run_args(tmp_path / "a"))
    main(["run", "--env", "pendulum", "--budget", "3000", "--reps", "2", "--grid", "3", "--out", str(tmp_path / "b")])
    assert main(["compare", "--a", str(tmp_path / "a"), "--b", str(tmp_path / "b"), "--out", str(tmp_path / "c")]) == 1


def test_sweep(tmp_path):
    assert main(["sweep-tgrace", "--env", "pendulum", "--budget", "2000", "--reps", "2", "--grid", "2",
                 "--fractions", "0,0.2,1", "--out", str(tmp_path / "sw")]) == 0
    rows = read_csv(tmp_path / "sw" / "sweep.csv")
    assert [r["grace_fraction"] for r in rows] == ["0.0", "0.0", "0.2", "0.2", "1.0", "1.0"]
    assert all(float(r["final_best"]) < 0 for r in rows)


def test_record_and_replay(tmp_path):
    assert main(["record-archive", "--env", "cartpole", "--budget", "3000", "--reps", "2",
                 "--out", str(tmp_path / "arc")]) == 0
    assert sorted(p.name for p in (tmp_path / "arc").glob("rep_*.csv")) == ["rep_0.csv", "rep_1.csv"]
    assert main(["replay", "--archive", str(tmp_path / "arc"), "--fractions", "0,0.2,1",
                 "--out", str(tmp_path / "rp")]) == 0
    rows = read_csv(tmp_path / "rp" / "replay_report.csv")
    assert [r["grace_fraction"] for r in rows] == ["0.0", "0.2", "1.0"]
    assert rows[-1]["best_not_missed"] == "1.0" and rows[-1]["steps_computed"] == "1.0"


def test_ramp_env_and_offset(tmp_path):
    assert main(["run", "--env", "ramp:-1:100", "--budget", "1000", "--reps", "1", "--grid", "2",
                 "--offset", "2", "--out", str(tmp_path / "r")]) == 0
    rows = read_csv(tmp_path / "r" / "runs.csv")
    assert float(rows[-1]["best_objective"]) == 100.0  # (-1 + 2) * 100


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "gespkit", "--version"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "gespkit" in out.stdout
