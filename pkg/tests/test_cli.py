import json
import math
from pathlib import Path

import numpy as np
import pytest

from twosite_polymer import cli
from twosite_polymer.analytic import Beta
from twosite_polymer.ensemble import ModelParams, run_ensemble


def _run(argv):
    return cli.main(argv)


SIM_FLAGS = ["--dt", "0.005", "--horizon", "2.0", "--paths", "3000",
             "--stride", "0.1", "--seed", "42"]


def test_analytic_table(capsys):
    rc = _run(["analytic", "--beta", "0", "--beta", "1", "--beta", "2"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "0.5425728922" in out
    assert "-0.2712864461" in out
    assert "(b->0 limit)" in out
    # alpha_minus column increases over the grid while p decreases
    rows = [l.split() for l in out.strip().splitlines()[1:]]
    alphas = [float(r[2]) for r in rows]
    ps = [float(r[4]) for r in rows]
    assert alphas == sorted(alphas)
    assert ps == sorted(ps, reverse=True)


def test_analytic_rejects_negative_beta():
    with pytest.raises(SystemExit) as info:
        _run(["analytic", "--beta", "-1"])
    assert info.value.code == 2


def test_simulate_writes_roundtrippable_outputs(tmp_path, capsys):
    rc = _run(["simulate", "--beta", "1.0", *SIM_FLAGS, "--out", str(tmp_path)])
    assert rc == 0
    summary = capsys.readouterr().out
    assert "alpha_minus_hat=" in summary and "p_hat=" in summary

    text = (tmp_path / "curve.csv").read_text()
    lines = text.strip().splitlines()
    assert lines[0] == cli.CURVE_HEADER
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]])

    params = ModelParams(beta=Beta(1.0), dt=0.005, horizon=2.0, n_paths=3000,
                         output_stride=0.1, master_seed=42)
    curve = run_ensemble(params)
    # 17-significant-digit serialization round-trips the doubles exactly
    assert np.array_equal(data[:, 0], curve.times)
    assert np.array_equal(data[:, 1], curve.mean_overlap)
    assert np.array_equal(data[:, 2], curve.se_overlap)
    assert np.array_equal(data[:, 5], curve.mean_log_z)
    assert np.array_equal(data[:, 8], curve.mean_z2)

    report = json.loads((tmp_path / "report.json").read_text())
    assert report["params"]["beta"] == 1.0
    assert report["report"]["alpha_minus_ref"] == pytest.approx(0.5425728922436619)


def test_simulate_deterministic_across_workers(tmp_path):
    outs = []
    for name, workers in (("a", "1"), ("b", "3")):
        d = tmp_path / name
        d.mkdir()
        rc = _run(["simulate", "--beta", "0.5", *SIM_FLAGS,
                   "--workers", workers, "--out", str(d)])
        assert rc == 0
        outs.append(d)
    assert (outs[0] / "curve.csv").read_bytes() == (outs[1] / "curve.csv").read_bytes()
    assert (outs[0] / "report.json").read_bytes() == (outs[1] / "report.json").read_bytes()


def test_simulate_missing_output_directory(tmp_path, capsys):
    missing = tmp_path / "nope"
    rc = _run(["simulate", "--beta", "1.0", *SIM_FLAGS, "--out", str(missing)])
    assert rc == 1
    assert not missing.exists()
    assert "does not exist" in capsys.readouterr().err


def test_simulate_invalid_config_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        _run(["simulate", "--beta", "1.0", "--dt", "0.2", "--horizon", "2.0",
              "--paths", "10", "--stride", "0.1", "--out", str(tmp_path)])
    assert info.value.code == 2


def test_simulate_beta_zero_curve(tmp_path):
    rc = _run(["simulate", "--beta", "0", "--dt", "0.001", "--horizon", "5",
               "--paths", "4", "--stride", "0.1", "--seed", "1",
               "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "curve.csv").read_text().strip().splitlines()[1:]
    for line in lines:
        vals = [float(v) for v in line.split(",")]
        t, overlap = vals[0], vals[1]
        assert abs(overlap - 0.5 * (1.0 + math.exp(-4.0 * t))) < 1e-6


def test_sweep_single_beta_reproduces_simulate(tmp_path):
    sim_dir = tmp_path / "sim"
    sweep_dir = tmp_path / "sweep"
    sim_dir.mkdir()
    sweep_dir.mkdir()
    assert _run(["simulate", "--beta", "1.0", *SIM_FLAGS, "--out", str(sim_dir)]) == 0
    assert _run(["sweep", "--betas", "1.0", *SIM_FLAGS, "--out", str(sweep_dir)]) == 0
    sub = sweep_dir / "beta_1"
    assert (sub / "curve.csv").read_bytes() == (sim_dir / "curve.csv").read_bytes()
    assert (sub / "report.json").read_bytes() == (sim_dir / "report.json").read_bytes()
    assert (sweep_dir / "sweep.csv").exists()


def test_sweep_grid_monotone_free_energy(tmp_path):
    rc = _run(["sweep", "--betas", "0.25,0.5,1", "--dt", "0.01", "--horizon", "2.0",
               "--paths", "2000", "--stride", "0.2", "--seed", "3",
               "--out", str(tmp_path)])
    assert rc == 0
    lines = (tmp_path / "sweep.csv").read_text().strip().splitlines()
    assert lines[0].startswith("beta,")
    rows = [[float(v) for v in line.split(",")] for line in lines[1:]]
    p_ref = [r[5] for r in rows]
    assert p_ref == sorted(p_ref, reverse=True)  # p(beta) strictly decreasing
    alpha_ref = [r[2] for r in rows]
    assert alpha_ref == sorted(alpha_ref)  # alpha_minus(beta) increasing


def test_sweep_empty_grid_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as info:
        _run(["sweep", "--betas", ",", *SIM_FLAGS, "--out", str(tmp_path)])
    assert info.value.code == 2


def test_verify_exit_codes(monkeypatch, capsys):
    from twosite_polymer.acceptance import CriterionResult

    ok = CriterionResult(cid=1, name="fake", passed=True, seconds=0.0, details=["  [ok] x"])
    bad = CriterionResult(cid=2, name="fake2", passed=False, seconds=0.0,
                          details=["  [FAIL] y"])
    monkeypatch.setattr(cli, "run_all", lambda scale: [ok])
    assert _run(["verify", "--level", "quick"]) == 0
    monkeypatch.setattr(cli, "run_all", lambda scale: [ok, bad])
    assert _run(["verify", "--level", "quick"]) == 1
    out = capsys.readouterr().out
    assert "criterion 2" in out and "FAIL" in out
