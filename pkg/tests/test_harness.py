import json

import numpy as np
import pytest

from se23lqr.harness.cli import main
from se23lqr.harness.experiments import (
    MonteCarloConfig,
    draw_trial,
    heading_sweep,
    monte_carlo,
    uncertainty_study,
)
from se23lqr.harness.io import SERIES_HEADER, SUMMARY_HEADER, emit_outputs, load_config, write_summary_csv
from se23lqr.harness.scenario import ScenarioConfig, compute_rmse, run_scenario
from se23lqr.linearize import Variant

SHORT = ScenarioConfig(duration=0.5)


def test_compute_rmse_examples():
    z = np.zeros((4, 3))
    assert compute_rmse(z, z, z) == (0.0, 0.0, 0.0)
    c = np.tile([0.0, 0.6, 0.8], (5, 1)) * 2.0
    assert np.isclose(compute_rmse(z[:5], z[:5], c)[2], 2.0)
    dr = np.array([[1.0, 0, 0], [0, 3.0, 0]])
    assert abs(compute_rmse(dr, dr, dr)[2] - np.sqrt(5.0)) < 1e-12
    with pytest.raises(ValueError):
        compute_rmse(np.zeros((0, 3)), z, z)


def test_config_validation_and_round_trip():
    with pytest.raises(ValueError):
        ScenarioConfig(duration=0.0)
    with pytest.raises(ValueError):
        ScenarioConfig(variant="nope")
    with pytest.raises(ValueError):
        ScenarioConfig(initial_mode="sideways")
    with pytest.raises(ValueError, match="unknown scenario keys"):
        ScenarioConfig.from_dict({"durration": 1.0})
    cfg = ScenarioConfig(heading=1.0, estimate_scale=(0.8, 0.8, 0.8, 0.8))
    again = ScenarioConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()
    assert ScenarioConfig().steps == 4000 and ScenarioConfig().T == 0.0025


def test_zero_error_run_is_at_equilibrium():
    res = run_scenario(ScenarioConfig(record_series=True))
    assert res.rmse_r < 1e-2
    assert np.max(np.abs(res.series["xi"])) < 1e-3


def test_run_is_deterministic():
    cfg = SHORT.replace(noise_std=(0.01, 0.02, 0.02, 0.005), actuator_tau=0.02, heading=1.0, seed=7)
    a, b = run_scenario(cfg), run_scenario(cfg)
    assert a.summary() == b.summary()
    c = run_scenario(cfg.replace(seed=8))
    assert c.rmse_r != a.rmse_r


def test_noise_does_not_touch_truth():
    clean = run_scenario(SHORT.replace(record_series=True))
    noisy = run_scenario(SHORT.replace(record_series=True, noise_std=(0.1, 0.1, 0.1, 0.1), seed=3))
    # Tick 0 is scored before any command is applied: truth is untouched by the noise draw.
    assert np.array_equal(clean.series["dr"][0], noisy.series["dr"][0])
    assert np.array_equal(clean.series["dphi"][0], noisy.series["dphi"][0])
    assert not np.array_equal(clean.series["xi"][0], noisy.series["xi"][0])


def test_absolute_initial_mode():
    res = run_scenario(SHORT.replace(initial_mode="absolute", position_offset=(0.0, 3.0, 0.0), record_series=True))
    assert np.allclose(res.series["dr"][0], 0.0, atol=1e-12)


def test_heading_sweep_table():
    rows = heading_sweep(SHORT, [0.0, np.pi])
    assert len(rows) == 8
    assert {r.label["variant"] for r in rows} == {v.value for v in Variant}
    for r in rows[:4]:
        assert r.result.rmse_r < 1e-2
    with pytest.raises(ValueError):
        heading_sweep(SHORT, [])


def test_uncertainty_rows():
    rows = uncertainty_study(SHORT.replace(duration=0.25))
    assert [(r.label["variant"], r.label["integrator"]) for r in rows] == [
        ("se23-nodrag", True), ("se23-nodrag", False),
        ("conventional-nodrag", True), ("conventional-nodrag", False),
    ]


def test_trial_draws():
    cfg = MonteCarloConfig(trials=3, master_seed=5)
    a, b = draw_trial(cfg, 1), draw_trial(cfg, 1)
    assert a == b and draw_trial(cfg, 2) != a
    zero = MonteCarloConfig(sigma_kappa=(0, 0, 0, 0), sigma_pos=0.0, heading_std=0.0)
    d = draw_trial(zero, 4)
    assert d.kappa == (1.0, 1.0, 1.0, 1.0) and d.position == (0.0, 0.0, 0.0) and d.heading == 0.0
    with pytest.raises(ValueError):
        MonteCarloConfig(trials=0)
    with pytest.raises(ValueError):
        MonteCarloConfig(sigma_pos=-1.0)


def test_degenerate_monte_carlo_matches_nominal():
    base = SHORT.replace(initial_mode="absolute", position_offset=(0.0, 3.0, 0.0))
    cfg = MonteCarloConfig(base=base, trials=2, sigma_kappa=(0, 0, 0, 0), sigma_pos=0.0, heading_std=0.0,
                           variants=(Variant.SE23_NODRAG,))
    rep = monte_carlo(cfg)
    nominal = run_scenario(base.replace(position_offset=(0.0, 0.0, 0.0)))
    for r in rep.results["se23-nodrag"]:
        assert r.rmse_r == nominal.rmse_r and r.rmse_phi == nominal.rmse_phi


def test_monte_carlo_workers_do_not_change_results():
    base = SHORT.replace(duration=0.25, initial_mode="absolute")
    serial = monte_carlo(MonteCarloConfig(base=base, trials=3))
    pooled = monte_carlo(MonteCarloConfig(base=base, trials=3, workers=2))
    assert serial.aggregate_rows() == pooled.aggregate_rows()


def test_summary_csv_shapes(tmp_path):
    path = write_summary_csv(tmp_path / "s.csv", [])
    assert path.read_text().splitlines() == [",".join(SUMMARY_HEADER)]
    rows = heading_sweep(SHORT.replace(duration=0.05), np.deg2rad(np.arange(0, 181, 30)))
    text = write_summary_csv(tmp_path / "t.csv", rows).read_text().splitlines()
    assert len(text) == 1 + 28


def test_emit_outputs(tmp_path):
    res = run_scenario(SHORT.replace(record_series=True))
    from se23lqr.harness.experiments import ResultRow

    files = emit_outputs(tmp_path, "simulate", [ResultRow("simulate", {"variant": "se23-nodrag"}, res)],
                         SHORT.to_dict(), 0)
    names = sorted(p.name for p in files)
    assert names == ["manifest.json", "simulate_000_series.csv", "simulate_summary.csv"]
    series = (tmp_path / "simulate_000_series.csv").read_text().splitlines()
    assert series[0] == ",".join(SERIES_HEADER) and len(series) == 1 + SHORT.steps
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"] == SHORT.to_dict() and manifest["seed"] == 0
    with pytest.raises(ValueError):
        emit_outputs(tmp_path, "x", [], {}, 0, fmt="parquet")


def test_load_config(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('[scenario]\nduration = 2.0\nvariant = "conventional-drag"\n[monte_carlo]\ntrials = 4\n')
    cfg = load_config(p)
    assert cfg["scenario"]["duration"] == 2.0 and cfg["monte_carlo"]["trials"] == 4
    p.write_text("duration = = 2")
    with pytest.raises(ValueError):
        load_config(p)


def test_cli_round_trip(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[scenario]\nduration = 0.1\nheading_deg = 45\n")
    out = tmp_path / "out"
    assert main(["simulate", "--config", str(cfg), "--out-dir", str(out), "--variant", "conventional-nodrag"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["variant"] == "conventional-nodrag"
    assert np.isclose(manifest["config"]["heading"], np.pi / 4)
    assert main(["gains", "--config", str(cfg), "--out-dir", str(tmp_path / "g")]) == 0
    lines = (tmp_path / "g" / "gains.csv").read_text().splitlines()
    assert len(lines) == 1 + 40 and lines[0].count(",") == 1 + 48


def test_cli_errors(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "missing.toml")]) != 0
    assert "error" in capsys.readouterr().err
    bad = tmp_path / "bad.toml"
    bad.write_text("[scenario]\nduration = -1\n")
    assert main(["simulate", "--config", str(bad), "--out-dir", str(tmp_path)]) != 0
    with pytest.raises(SystemExit):
        main(["nonsense"])
