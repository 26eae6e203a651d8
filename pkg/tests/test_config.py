from pathlib import Path

import pytest

from hprnn import settings
from hprnn.config import (
    EXPERIMENT_NAMES,
    ExperimentConfig,
    NetworkConfig,
    apply_overrides,
    default_experiment_config,
    load_experiment_config,
    parse_experiment_config,
    resolve_experiment,
)
from hprnn.errors import ConfigurationError, UsageError


def test_network_defaults():
    cfg = NetworkConfig()
    assert (cfg.n_input, cfg.n_output, cfg.n_d, cfg.n_v, cfg.n_pb_d, cfg.n_pb_v) == (4, 4, 50, 50, 1, 1)
    assert (cfg.eta_dorsal, cfg.eta_ventral) == (1e-3, 1e-5)
    assert (cfg.eta_min, cfg.eta_max) == (1e-7, 1e-1)
    assert (cfg.xi_plus, cfg.xi_minus) == (1.000001, 0.999999)
    assert cfg.m_gamma == 1e-2
    assert cfg.gamma_recognition == 1e-3
    assert cfg.pb_wiring == "cross"
    cfg.check()


@pytest.mark.parametrize(
    "changes, fragment",
    [
        ({"n_d": 0}, "n_d"),
        ({"n_output": 3}, "n_output"),
        ({"eta_min": 1e-1, "eta_max": 1e-3}, "eta_min"),
        ({"eta_dorsal": 1.0}, "eta_dorsal"),
        ({"xi_plus": 0.9}, "xi_plus"),
        ({"xi_minus": 1.1}, "xi_minus"),
        ({"m_gamma": -1.0}, "m_gamma"),
    ],
)
def test_network_check_names_the_violated_constraint(changes, fragment):
    with pytest.raises(ConfigurationError, match=fragment):
        NetworkConfig(**changes).check()


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigurationError, match="bogus"):
        parse_experiment_config({"network": {"bogus": 1}})
    with pytest.raises(ConfigurationError):
        parse_experiment_config({"colour": "red"})


def test_wrong_types_are_rejected():
    with pytest.raises(ConfigurationError, match="n_d"):
        parse_experiment_config({"network": {"n_d": "many"}})
    with pytest.raises(ConfigurationError):
        parse_experiment_config({"data": {"shapes": ["triangle"]}})
    with pytest.raises(ConfigurationError):
        parse_experiment_config(["not", "a", "mapping"])


def test_load_yaml_manifest(tmp_path):
    (tmp_path / "experiment.yaml").write_text(
        "name: mine\nseed: 9\nnetwork:\n  n_d: 7\ndata:\n  speed_factor: 1.5\n", encoding="utf-8"
    )
    cfg = load_experiment_config(tmp_path)
    assert cfg.name == "mine"
    assert cfg.seed == 9
    assert cfg.network.n_d == 7
    assert cfg.data.speed_factor == 1.5
    assert load_experiment_config(tmp_path / "experiment.yaml") == cfg


def test_invalid_yaml_is_a_configuration_error(tmp_path):
    (tmp_path / "experiment.yaml").write_text("network: [unclosed\n", encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_experiment_config(tmp_path)


def test_missing_manifest_is_a_usage_error(tmp_path):
    with pytest.raises(UsageError):
        load_experiment_config(tmp_path / "missing.yaml")


def test_bundled_manifests_load():
    for name in EXPERIMENT_NAMES:
        cfg = load_experiment_config(settings.EXPERIMENTS_DIR / name)
        assert cfg.name == name
    assert load_experiment_config(settings.EXPERIMENTS_DIR / "fig8").data.speed_factor == 2.0
    assert load_experiment_config(settings.EXPERIMENTS_DIR / "fig6").prediction.steps == 19


@pytest.mark.parametrize("name", EXPERIMENT_NAMES)
def test_bundled_manifests_match_the_builtin_defaults(name):
    on_disk = load_experiment_config(settings.EXPERIMENTS_DIR / name)
    builtin = default_experiment_config(name)
    for part in ("network", "train", "data", "recognition", "prediction"):
        assert getattr(on_disk, part) == getattr(builtin, part), part
    assert on_disk.train.max_epochs == 10000
    assert (on_disk.network.xi_plus, on_disk.network.xi_minus) == (1.001, 0.99)
    assert on_disk.effective_gamma_recognition() == 1e-3


def test_resolve_falls_back_to_builtin_defaults(tmp_path):
    cfg = resolve_experiment("fig8", experiments_dir=tmp_path)
    assert cfg == default_experiment_config("fig8")
    assert cfg.data.speed_factor == 2.0
    with pytest.raises(UsageError):
        default_experiment_config("fig9")


def test_overrides(tmp_path):
    cfg = apply_overrides(
        ExperimentConfig(name="fig4"), seed=3, epochs=10, speed_factor=2.0, noise_sigma=0.0, output_dir=str(tmp_path)
    )
    assert cfg.seed == 3
    assert cfg.train.max_epochs == 10
    assert cfg.data.speed_factor == 2.0
    assert cfg.data.noise_sigma == 0.0
    assert cfg.resolved_output_dir() == Path(tmp_path)
    with pytest.raises(ConfigurationError):
        apply_overrides(cfg, epochs=0)


def test_default_output_dir_is_under_the_runs_directory():
    assert ExperimentConfig(name="fig5").resolved_output_dir() == settings.OUTPUT_DIR / "fig5"


def test_recognition_gamma_falls_back_to_the_network():
    cfg = ExperimentConfig()
    assert cfg.effective_gamma_recognition() == cfg.network.gamma_recognition
    cfg = parse_experiment_config({"recognition": {"gamma_recognition": 0.5}})
    assert cfg.effective_gamma_recognition() == 0.5
