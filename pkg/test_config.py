"""
Tests for the configuration manager.
"""

import json
import os

import pytest

from config import Config

REPO_CONFIG = os.path.join(os.path.dirname(os.path.abspath(__file__)), "config.json")


def test_defaults_without_file():
    config = Config()
    assert config.get("numerics", "violation_tolerance") == 1e-9
    assert config.get("sampling", "bootstrap_resamples") == 200
    assert config.get("cli", "max_identity_nmax") == 10
    assert config.get_numerics()["psd_check_max_dimension"] == 1024
    assert config.get_sampling()["min_shots"] == 30


def test_defaults_are_not_shared():
    first = Config()
    first.set("numerics", "identity_tolerance", 1.0)
    assert Config().get("numerics", "identity_tolerance") == 1e-12
    assert first.default_config["numerics"]["identity_tolerance"] == 1e-12


def test_repository_config_matches_defaults():
    with open(REPO_CONFIG, "r", encoding="utf-8") as f:
        shipped = json.load(f)
    assert shipped == Config().default_config


def test_partial_file_is_merged(tmp_path):
    path = tmp_path / "lab.json"
    path.write_text(json.dumps({"sampling": {"min_shots": 100}}), encoding="utf-8")
    config = Config(str(path))
    assert config.get("sampling", "min_shots") == 100
    assert config.get("sampling", "bootstrap_resamples") == 200
    assert config.get("numerics", "violation_tolerance") == 1e-9


def test_unknown_keys_warn(tmp_path, caplog):
    path = tmp_path / "lab.json"
    path.write_text(json.dumps({"plotting": {"dpi": 300}}), encoding="utf-8")
    with caplog.at_level("WARNING", logger="config"):
        config = Config(str(path))
    assert config.get("plotting", "dpi") == 300
    assert "plotting" in caplog.text


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        Config(str(tmp_path / "absent.json"))


@pytest.mark.parametrize("content", ["{not json", "[1, 2, 3]"])
def test_invalid_file(tmp_path, content):
    path = tmp_path / "lab.json"
    path.write_text(content, encoding="utf-8")
    with pytest.raises(ValueError):
        Config(str(path))


def test_save_and_reload(tmp_path):
    config = Config()
    config.set("cli", "workers", 1)
    path = config.save_config(str(tmp_path / "saved.json"))
    text = open(path, encoding="utf-8").read()
    assert text.endswith("}\n")
    assert Config(path).get("cli", "workers") == 1


def test_save_without_target():
    with pytest.raises(ValueError):
        Config().save_config()


def test_get_section_and_missing_key():
    config = Config()
    assert set(config.get("data_settings")) == {"save_directory", "float_format"}
    assert config.get("numerics", "nonexistent") is None
    assert config.get("nonexistent") == {}
