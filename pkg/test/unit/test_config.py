# -*- coding: utf-8 -*-
"""Pytest unit tests for CompSim config module.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import json

import pytest

from compsim.config import DEFAULT_CONFIG, JOBS_ENV_VAR, default_config, load_config
from compsim.exceptions import CompSimValidationError, ConfigValidationError


@pytest.mark.unit
def test_load_config_defaults():
    """Unit test for loading the default configuration.

    Note:
        Tests :func:`~compsim.config.load_config`.

    Returns:
        None

    """
    cfg = load_config(apply_env=False)
    assert cfg.resolved() == DEFAULT_CONFIG
    assert cfg.config_hash == default_config().config_hash
    assert cfg.world["max_step"] == 0.02
    assert cfg.neuralsim["T"] == 50


@pytest.mark.unit
def test_load_config_file_merges_sections(tmp_path):
    """Unit test for merging a partial configuration file over the defaults.

    Note:
        Tests :func:`~compsim.config.load_config`.

    Returns:
        None

    """
    config_file = tmp_path / "experiment.json"
    config_file.write_text(json.dumps({"seed": 7, "neuralsim": {"epochs": 2}}))

    cfg = load_config(config_file, overrides={"policy": {"epochs": 3}}, apply_env=False)
    assert cfg.seed == 7
    assert cfg.neuralsim["epochs"] == 2
    assert cfg.neuralsim["T"] == DEFAULT_CONFIG["neuralsim"]["T"]
    assert cfg.policy["epochs"] == 3
    assert cfg.config_hash != default_config().config_hash


@pytest.mark.unit
def test_load_config_reports_every_problem(tmp_path):
    """Unit test for validation errors listing all problems at once.

    Note:
        Tests :func:`~compsim.config.validate_config_data`.

    Returns:
        None

    """
    config_file = tmp_path / "experiment.json"
    config_file.write_text(json.dumps({"jobs": 0, "world": {"lattice": -1.0}, "colour": "red"}))

    with pytest.raises(ConfigValidationError) as err:
        load_config(config_file, apply_env=False)
    errors = err.value.errors
    assert any(e.startswith("jobs:") for e in errors)
    assert any(e.startswith("world.lattice:") for e in errors)
    assert any(e.startswith("colour: unknown key") for e in errors)
    assert err.value.path == str(config_file)
    assert isinstance(err.value, CompSimValidationError)


@pytest.mark.unit
def test_load_config_cross_checks():
    """Unit test for checks spanning several configuration values.

    Note:
        Tests :func:`~compsim.config.validate_config_data`.

    Returns:
        None

    """
    with pytest.raises(ConfigValidationError) as err:
        load_config(apply_env=False, overrides={"world": {"h_min": 0.2}, "policy": {"pseudo_variant": "xyz"}})
    assert "world.h_min: must not exceed world.lift_height" in err.value.errors
    assert any(e.startswith("policy.pseudo_variant:") for e in err.value.errors)

    with pytest.raises(ConfigValidationError):
        load_config(apply_env=False, overrides={"neuralsim": {"sampling_steps": 60}})

    with pytest.raises(ConfigValidationError):
        load_config(apply_env=False, overrides={"tasks": {"train": ["juggle"]}})


@pytest.mark.unit
def test_load_config_unreadable_file(tmp_path):
    """Unit test for missing and malformed configuration files.

    Note:
        Tests :func:`~compsim.config.load_config`.

    Returns:
        None

    """
    with pytest.raises(ConfigValidationError):
        load_config(tmp_path / "missing.json", apply_env=False)

    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigValidationError):
        load_config(broken, apply_env=False)

    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]")
    with pytest.raises(ConfigValidationError):
        load_config(listed, apply_env=False)


@pytest.mark.unit
def test_load_config_jobs_environment(monkeypatch):
    """Unit test for the worker cap environment override.

    Note:
        Tests :func:`~compsim.config.load_config`.

    Returns:
        None

    """
    monkeypatch.setenv(JOBS_ENV_VAR, "3")
    assert load_config().jobs == 3
    assert load_config(apply_env=False).jobs == DEFAULT_CONFIG["jobs"]

    monkeypatch.setenv(JOBS_ENV_VAR, "many")
    with pytest.raises(ConfigValidationError):
        load_config()


@pytest.mark.unit
def test_experiment_config_helpers(cfg):
    """Unit test for the camera, appearance, and guidance accessors of a configuration.

    Note:
        Tests :class:`~compsim.config.ExperimentConfig`.

    Returns:
        None

    """
    camera = cfg.camera_model()
    assert camera.resolution == (64, 64)
    assert camera.fx == 100.0

    weights = cfg.guidance("vd")
    assert (weights.w_v, weights.w_a, weights.joint_mode) == (1.5, 0.0, False)

    assert cfg.appearance_params().noise_sigma == 0.02

    updated = cfg.with_overrides({"seed": 5})
    assert updated.seed == 5
    assert cfg.seed == 0
    with pytest.raises(ConfigValidationError):
        cfg.with_overrides({"seed": -1})
