import json
import os

import numpy as np
import pytest

from qkrf.cli import main as cli_main
from qkrf.experiments import (
    DEFAULTS,
    DESCRIPTIONS,
    ExperimentConfig,
    ExperimentError,
    RunManifest,
    family_potential,
    fit_decay,
    metric_passes,
    run_experiment,
)


def test_fit_decay_exact_rates():
    k = [2, 4, 8, 16]
    slope, half = fit_decay(k, [1.0 / x for x in k])
    assert slope == pytest.approx(-1.0, abs=1e-12)
    assert half <= 1e-12
    slope2, _ = fit_decay(k, [1.0 / x**2 for x in k])
    assert slope2 == pytest.approx(-2.0, abs=1e-12)


def test_fit_decay_noisy_seeded():
    rng = np.random.default_rng(5)
    k = np.array([2, 4, 8, 16, 32])
    errors = (1.0 / k) * np.exp(0.05 * rng.standard_normal(k.size))
    slope, half = fit_decay(k, errors)
    assert abs(slope + 1.0) <= 0.15
    assert half > 0.0


def test_fit_decay_guards():
    with pytest.raises(ExperimentError):
        fit_decay([2, 4], [0.1, 0.05])
    with pytest.raises(ExperimentError):
        fit_decay([2, 4, 8], [0.1, 0.0, 0.01])


def test_family_potential_validation(p1):
    from qkrf.geometry import KahlerConeError

    phi = family_potential(p1, "bump", 0.3)
    assert phi.is_radial
    with pytest.raises(ExperimentError):
        family_potential(p1, "plateau", 0.3)
    with pytest.raises(KahlerConeError):
        family_potential(p1, "bump", 5.0)


def test_family_sine_profile(p1):
    phi = family_potential(p1, "sine", 0.2)
    assert np.allclose(phi.require_profile(), 0.2 * np.sin(np.pi * p1.u), atol=1e-15)


def test_config_defaults_and_round_trip():
    cfg = ExperimentConfig.from_dict({"experiment": "monotonicity"})
    assert cfg.params["k"] == DEFAULTS["monotonicity"]["k"]
    assert cfg.params["seed"] == 0
    back = ExperimentConfig.from_dict(cfg.to_dict())
    assert back.to_dict() == cfg.to_dict()


def test_config_rejects_unknown_experiment():
    with pytest.raises(ExperimentError):
        ExperimentConfig.from_dict({"experiment": "warp-drive"})


def test_config_field_errors_carry_paths():
    with pytest.raises(ExperimentError, match="duality.panel"):
        ExperimentConfig.from_dict({"experiment": "duality", "panel": 0})
    with pytest.raises(ExperimentError, match="euler-gap.k_list"):
        ExperimentConfig.from_dict({"experiment": "euler-gap", "k_list": [0, 2]})
    with pytest.raises(ExperimentError, match="monotonicity.turbo"):
        ExperimentConfig.from_dict({"experiment": "monotonicity", "turbo": True})
    with pytest.raises(ExperimentError, match="thmB-entropy.amplitude"):
        ExperimentConfig.from_dict({"experiment": "thmB-entropy", "amplitude": 2.0})


def test_every_experiment_has_defaults_and_description():
    assert set(DEFAULTS) == set(DESCRIPTIONS)
    assert "thmA-gap" in DEFAULTS and "thmB-entropy" in DEFAULTS


def test_metric_passes_rules():
    assert metric_passes({"value": 0.5, "threshold": 1.0, "op": "<="})
    assert not metric_passes({"value": 2.0, "threshold": 1.0, "op": "<="})
    assert metric_passes({"value": 2.0, "threshold": 1.0, "op": ">="})
    assert not metric_passes({"value": float("nan"), "threshold": 1.0, "op": "<="})


def test_run_writes_manifest_and_is_deterministic(tmp_path):
    cfg = ExperimentConfig.from_dict({"experiment": "na-panel", "pairs": 200})
    m1 = run_experiment(cfg, output_dir=str(tmp_path / "a"))
    m2 = run_experiment(cfg, output_dir=str(tmp_path / "b"))
    assert m1.passed and m2.passed
    csv1 = (tmp_path / "a" / "na-panel.csv").read_bytes()
    csv2 = (tmp_path / "b" / "na-panel.csv").read_bytes()
    assert csv1 == csv2
    assert m1.metrics == m2.metrics
    loaded = RunManifest.from_json(str(tmp_path / "a" / "manifest.json"))
    assert loaded.experiment == "na-panel"
    assert loaded.metrics == m1.metrics
    assert any("PASS" in line for line in loaded.summary_lines())


def test_threads_env_does_not_change_results(tmp_path):
    cfg = ExperimentConfig.from_dict({"experiment": "na-panel", "pairs": 100})
    old = os.environ.get("QKRF_THREADS")
    try:
        os.environ["QKRF_THREADS"] = "1"
        m1 = run_experiment(cfg, output_dir=str(tmp_path / "serial"))
        os.environ["QKRF_THREADS"] = "4"
        m2 = run_experiment(cfg, output_dir=str(tmp_path / "parallel"))
    finally:
        if old is None:
            os.environ.pop("QKRF_THREADS", None)
        else:
            os.environ["QKRF_THREADS"] = old
    assert m1.metrics == m2.metrics
    a = (tmp_path / "serial" / "na-panel.csv").read_bytes()
    b = (tmp_path / "parallel" / "na-panel.csv").read_bytes()
    assert a == b


def test_cli_list_experiments(capsys):
    assert cli_main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    for name in DEFAULTS:
        assert name in out


def test_cli_run_and_check(tmp_path, capsys):
    config_path = tmp_path / "cfg.json"
    config_path.write_text(
        json.dumps({"experiment": "na-panel", "pairs": 100})
    )
    out_dir = tmp_path / "out"
    code = cli_main(["run", str(config_path), "--output-dir", str(out_dir)])
    assert code == 0
    assert (out_dir / "manifest.json").exists()
    assert cli_main(["check", str(out_dir / "manifest.json")]) == 0
    doc = json.loads((out_dir / "manifest.json").read_text())
    doc["metrics"][0]["value"] = doc["metrics"][0]["threshold"] + 1.0
    bad = tmp_path / "tampered.json"
    bad.write_text(json.dumps(doc))
    assert cli_main(["check", str(bad)]) == 1


def test_cli_config_errors_exit_two(tmp_path, capsys):
    missing = tmp_path / "nope.json"
    assert cli_main(["run", str(missing)]) == 2
    invalid = tmp_path / "invalid.json"
    invalid.write_text(json.dumps({"experiment": "duality", "panel": -3}))
    assert cli_main(["run", str(invalid)]) == 2
    err = capsys.readouterr().err
    assert "duality.panel" in err
