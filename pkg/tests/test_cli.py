import json
from pathlib import Path

import numpy as np
import pytest

from longliq import cli
from longliq.cli import main
from longliq.riccati import SolverError
from longliq.io import read_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def load(path):
    return json.loads(path.read_text())


def test_solve(tmp_path):
    assert run(tmp_path, "solve", "--params", str(CONFIGS / "fig1.toml"), "--T", "30", "--steps", "3000") == 0
    meta, cols, data = read_csv(tmp_path / "coeffs.csv")
    assert data.shape[0] == 3001 and cols[:2] == ["t", "abar"]
    assert meta["seed"] == "1" and len(meta["config_hash"]) == 16
    summary = load(tmp_path / "summary.json")
    assert summary["abar_inf"] == pytest.approx(0.1314100, abs=1e-6)
    assert summary["meta"]["config_hash"] == meta["config_hash"]


def test_solve_rejects_negative_horizon(tmp_path, capsys):
    assert run(tmp_path, "solve", "--T", "-1") == 2
    assert "T must be positive" in capsys.readouterr().err


@pytest.mark.parametrize("args,msg", [
    (["simulate", "--n-paths", "0"], "n-paths"),
    (["simulate", "--dt", "0.03", "--T", "1"], "multiple of dt"),
    (["longrun", "--window-start", "50", "--window-end", "40"], "window"),
    (["solve", "--params", "/nonexistent.toml"], "not found"),
    (["verify", "--only", "bogus"], "unknown checks"),
])
def test_input_errors(tmp_path, capsys, args, msg):
    assert run(tmp_path, *args) == 2
    assert msg in capsys.readouterr().err


def test_invalid_parameters(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("gamma = 0\nphi = 0.2\nrho = 0.7\nlambda = 0.1\nsigma = 0.25\nx0 = 5\n")
    assert run(tmp_path, "solve", "--params", str(bad)) == 2
    assert "gamma must be positive" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, monkeypatch, capsys):
    def boom(*args):
        raise SolverError("abar left its range")
    monkeypatch.setitem(cli.COMMANDS, "solve", boom)
    assert run(tmp_path, "solve") == 3
    assert "abar left its range" in capsys.readouterr().err


def test_unknown_run_key(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text((CONFIGS / "fig1.toml").read_text() + "paths = 3\n")
    assert run(tmp_path, "solve", "--params", str(bad)) == 2


def test_precedence(tmp_path):
    # the file says T = 50 and seed = 1; the flag wins for T, the file for seed
    out = tmp_path / "a"
    assert main(["simulate", "--params", str(CONFIGS / "fig1_damped.toml"), "--T", "2", "--n-paths", "4",
                 "--out", str(out)]) == 0
    s = load(out / "summary.json")
    assert s["config"]["T"] == 2.0 and s["config"]["n_paths"] == 4 and s["seed"] == 1


def test_simulate_is_byte_deterministic(tmp_path):
    for d in ("a", "b"):
        assert main(["simulate", "--T", "2", "--n-paths", "20", "--seed", "9", "--mode", "infinite",
                     "--out", str(tmp_path / d)]) == 0
    for name in ("paths.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    meta, cols, data = read_csv(tmp_path / "a" / "paths.csv")
    assert cols == ["path", "t", "X", "Y"] and meta["seed"] == "9"
    s = load(tmp_path / "a" / "summary.json")
    assert s["max_feedback_residual"] <= 1e-10
    assert all("closed_var_x" in row for row in s["moments"])


def test_dp(tmp_path):
    assert run(tmp_path, "dp", "--T", "1", "--dt", "0.01") == 0
    _, cols, data = read_csv(tmp_path / "dp.csv")
    assert data.shape == (101, 9)
    s = load(tmp_path / "dp_summary.json")
    assert s["max_relation_residual"] < 1e-10
    assert 0.8 <= s["ode_comparison"]["order"] <= 1.3


def test_turnpike(tmp_path):
    assert run(tmp_path, "turnpike", "--T", "10") == 0
    s = load(tmp_path / "turnpike.json")
    assert s["K"] == pytest.approx(5.375) and s["pass"]
    _, cols, data = read_csv(tmp_path / "turnpike.csv")
    assert data.shape[0] == 1001 and np.all(data[:, 1] <= data[:, 2])


def test_converge(tmp_path):
    assert run(tmp_path, "converge", "--T-list", "2,4,8", "--n-paths", "100") == 0
    _, cols, data = read_csv(tmp_path / "converge.csv")
    assert cols[0] == "T" and data.shape == (3, 5)
    assert load(tmp_path / "converge.json")["decreasing"]["abar_gap"]


def test_longrun_and_signtest(tmp_path):
    assert run(tmp_path, "longrun", "--params", str(CONFIGS / "fig1_damped.toml"), "--n-paths", "200") == 0
    s = load(tmp_path / "longrun.json")
    assert s["case"] == "damped" and s["window"] == [40.0, 50.0] and s["passed"]
    assert run(tmp_path, "signtest", "--n-paths", "300") == 0
    s = load(tmp_path / "signtest.json")
    assert s["applicable"] and s["n_samples"] >= 100


def test_figure1(tmp_path):
    assert run(tmp_path, "figure1") == 0
    for name in ("fig1_left.svg", "fig1_right.svg", "paths.csv"):
        assert (tmp_path / name).exists()
    meta, cols, data = read_csv(tmp_path / "paths.csv")
    assert cols == ["panel", "path", "t", "X", "Y"]
    assert set(np.unique(data[:, 1])) == {0, 1, 2, 3, 4}
    left, right = data[data[:, 0] == 0], data[data[:, 0] == 1]
    assert np.allclose(data[data[:, 2] == 0.0, 3], 3.0801, atol=1e-4)
    late_left = left[left[:, 2] > 20.0]
    crossings = [np.any(np.diff(np.sign(late_left[late_left[:, 1] == k, 3])) != 0) for k in range(5)]
    assert any(crossings)
    assert np.all(np.abs(right[right[:, 2] >= 40.0, 3]) < 0.05)
    svg = (tmp_path / "fig1_left.svg").read_text()
    assert meta["config_hash"] in svg and svg.count("<polyline") == 5


def test_verify_small_sample_is_inconclusive(tmp_path, capsys):
    assert run(tmp_path, "verify", "--n-paths", "10") == 0
    captured = capsys.readouterr()
    assert "inconclusive (CI too wide)" in captured.out
    assert "warning: cost_vs_value" in captured.err
    report = load(tmp_path / "verify.json")
    status = {c["name"]: c["status"] for c in report["checks"]}
    assert status["cost_vs_value"] == "inconclusive" and report["passed"]


def test_verify_bug_hook_fails(tmp_path):
    assert run(tmp_path, "verify", "--only", "feedback_identity", "--abar-scale", "1.01") == 1
    report = load(tmp_path / "verify.json")
    assert report["failed"] == ["feedback_identity"]


@pytest.mark.slow
def test_verify_default_scale(tmp_path):
    assert run(tmp_path, "verify", "--params", str(CONFIGS / "fig1.toml")) == 0
    assert load(tmp_path / "verify.json")["passed"]
