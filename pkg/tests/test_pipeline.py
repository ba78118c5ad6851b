import json

import numpy as np
import pytest

from blowlab.cli import main
from blowlab.heat import homogeneous_blowup_time
from blowlab.pipeline import (CSV_COLUMNS, ExperimentConfig, InitialDataError,
                              initial_window_norms, make_initial_data,
                              normalize_initial_scale, report_to_json,
                              run_pipeline, write_history_csv)

P = 3.0


def test_config_scenario_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(scenario="exotic")
    cfg = ExperimentConfig()
    assert cfg.scenario == "paper-family"
    assert cfg.c0 == 0.5  # scenario default replaces the negative marker
    with pytest.raises(ValueError):
        ExperimentConfig(c0=0.3)  # outside the admissible window
    with pytest.raises(ValueError):
        ExperimentConfig(b0=-0.01)


def test_config_hash_ignores_output_location():
    a = ExperimentConfig(out_dir="runs/a")
    b = ExperimentConfig(out_dir="runs/b")
    assert a.config_hash() == b.config_hash()
    assert len(a.config_hash()) == 12
    assert a.config_hash() != ExperimentConfig(b0=0.04).config_hash()
    assert "out_dir" not in a.canonical_text()


def test_config_file_roundtrip(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# comment line\n"
        "scenario = homogeneous\n"
        "p = 3.0\n"
        "b0 = 0.0\n"
        "c0 = 1.0\n"
        "grid_points = 1001\n"
        "seed = 4\n")
    cfg = ExperimentConfig.from_file(str(path))
    assert cfg.scenario == "homogeneous"
    assert cfg.grid_points == 1001 and isinstance(cfg.grid_points, int)
    assert cfg.c0 == 1.0 and cfg.seed == 4


def test_initial_data_respects_the_window():
    cfg = ExperimentConfig(b0=0.05)
    u0 = make_initial_data(cfg)
    norms = initial_window_norms(u0, cfg.p, cfg.b0, cfg.c0)
    assert norms["delta3"] <= cfg.b0**2 * 1.01
    assert norms["delta0"] <= cfg.delta0_cap
    # a perturbation far above the b0^2 scale is refused
    with pytest.raises(InitialDataError):
        make_initial_data(ExperimentConfig(delta_coeff=50.0))


def test_homogeneous_initial_data_is_the_bare_profile():
    cfg = ExperimentConfig(scenario="homogeneous", c0=1.0, b0=0.0,
                           grid_points=1001)
    u0 = make_initial_data(cfg)
    np.testing.assert_allclose(u0.values, 1.0, rtol=1e-14)
    norms = initial_window_norms(u0, cfg.p, cfg.b0, cfg.c0)
    assert norms["delta0"] == 0.0 and norms["delta3"] == 0.0


def test_normalization_lands_on_the_gauge_line():
    cfg = ExperimentConfig(b0=0.08, c0=0.9)
    u0 = make_initial_data(cfg)
    scaled, b1, c1 = normalize_initial_scale(u0, cfg.p, cfg.b0, cfg.c0)
    k = (2.0 * cfg.c0 + 2.0 * cfg.b0 / (cfg.p - 1.0)) ** -0.5
    assert b1 == pytest.approx(k**2 * cfg.b0, rel=1e-13)
    assert c1 == pytest.approx(k**2 * cfg.c0, rel=1e-13)
    # target gauge: c = 1/2 - b/(p-1)
    assert c1 + b1 / (cfg.p - 1.0) == pytest.approx(0.5, abs=1e-13)
    assert scaled.values.max() == pytest.approx(
        k ** (2.0 / (cfg.p - 1.0)) * u0.values.max(), rel=1e-6)


@pytest.fixture(scope="module")
def homogeneous_report():
    cfg = ExperimentConfig(scenario="homogeneous", c0=1.0, b0=0.0,
                           grid_points=1001, sup_cap=1e6)
    return cfg, run_pipeline(cfg)


def test_homogeneous_run_recovers_the_exact_blowup_time(homogeneous_report):
    cfg, rep = homogeneous_report
    assert not rep.errors
    exact = homogeneous_blowup_time(cfg.c0 ** (1.0 / (cfg.p - 1.0)), cfg.p)
    assert rep.t_star == pytest.approx(exact, rel=0.01)
    assert rep.fits["lambda_exponent"].rel_error < 0.05
    assert rep.config_hash == cfg.config_hash()
    assert "out_dir" not in rep.config


def test_report_json_is_deterministic(homogeneous_report, flagship):
    _, rep = homogeneous_report
    one = report_to_json(rep)
    two = report_to_json(rep)
    assert one == two
    doc = json.loads(one)
    assert doc["scenario"] == "homogeneous"
    # series live in the similarity march, absent for the homogeneous run
    assert "history" not in json.loads(report_to_json(rep, include_series=True))
    full = json.loads(report_to_json(flagship.report, include_series=True))
    assert len(full["history"]["tau"]) > 10


def test_flagship_history_csv_layout(tmp_path, flagship):
    rep = flagship.report
    path = tmp_path / "history.csv"
    write_history_csv(rep, str(path))
    lines = path.read_text().strip().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    data = np.genfromtxt(str(path), delimiter=",", names=True)
    np.testing.assert_allclose(data["tau"], rep.history["tau"], rtol=1e-10)
    np.testing.assert_allclose(data["b"], rep.history["b"], rtol=1e-10)
    assert data["beta"].min() > 0.0


def test_flagship_reaches_the_expected_regime(flagship):
    rep = flagship.report
    assert not rep.errors
    # parameters settle near the equilibrium and the blowup time is finite
    assert abs(rep.history["a"][-1] - 0.5) < 0.05
    assert abs(rep.history["c"][-1] - 0.5) < 0.05
    assert rep.t_star is not None and rep.t_star > 0.0
    assert rep.fits["inverse_b_slope"].rel_error < 0.15


def test_cli_spectrum_and_suite_exit_codes(tmp_path):
    assert main(["spectrum", "--kind", "oscillator", "--a", "0.5",
                 "--count", "4", "--half-width", "14", "--points", "701"]) == 0
    assert main(["suite", "--tags", "splitting",
                 "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "suite.json").read_text())
    assert doc["all_passed"] is True
    assert doc["checks"][0]["name"] == "splitting_exactness"


def test_cli_simulate_writes_deterministic_artifacts(tmp_path):
    cfg_file = tmp_path / "h.cfg"
    cfg_file.write_text(
        "scenario = homogeneous\nc0 = 1.0\nb0 = 0.0\ngrid_points = 1001\n")
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["simulate", "--config", str(cfg_file),
                 "--out", str(out_a)]) == 0
    assert main(["simulate", "--config", str(cfg_file),
                 "--out", str(out_b)]) == 0
    names_a = sorted(f.name for f in out_a.iterdir())
    assert names_a == sorted(f.name for f in out_b.iterdir())
    assert any(n.startswith("run-") and n.endswith(".json") for n in names_a)
    for name in names_a:
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def test_cli_decompose_rejects_the_homogeneous_scenario():
    assert main(["decompose", "--scenario", "homogeneous"]) != 0
