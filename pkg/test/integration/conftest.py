# -*- coding: utf-8 -*-
"""Pytest integration test conftest.py.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

from pathlib import Path
from typing import Any, Dict

import pytest

from compsim.config import ExperimentConfig, load_config
from compsim.pipeline import Pipeline
from quickstart import quickstart

"""
Integration tests run the tiny quickstart configuration end to end. Acceptance tests need the full training budget of
config/experiment.json and only run when COMPSIM_RUN_ACCEPTANCE=1 is set.
"""


@pytest.fixture
def data_dir(tmp_path) -> Path:
    """Code tests will output data to this directory."""
    return tmp_path / "test_output"


@pytest.fixture
def seed() -> int:
    """Set global seed for testing."""
    return quickstart.get_seed()


@pytest.fixture
def task_label() -> str:
    """Set task label for testing."""
    return quickstart.get_task_label()


@pytest.fixture
def variant() -> str:
    """Set guidance variant for testing."""
    return quickstart.get_variant()


@pytest.fixture
def regime_name() -> str:
    """Set policy data-mixture regime for testing."""
    return quickstart.get_regime_name()


@pytest.fixture
def episodes() -> int:
    """Set number of episodes per task label for testing."""
    return quickstart.get_episodes()


@pytest.fixture
def config_overrides() -> Dict[str, Any]:
    """Set tiny configuration overrides for testing."""
    return quickstart.get_config_overrides()


@pytest.fixture
def tiny_cfg(config_overrides) -> ExperimentConfig:
    """Tiny experiment configuration (environment overrides are not applied)."""
    return load_config(overrides=config_overrides, apply_env=False)


@pytest.fixture
def pipeline(data_dir, tiny_cfg) -> Pipeline:
    """Instantiate CompSim Pipeline object over a fresh run directory."""
    return Pipeline(data_dir / "run", tiny_cfg)


@pytest.fixture(scope="module")
def completed_run(tmp_path_factory) -> Path:
    """Run directory holding every stage of the tiny configuration."""
    cfg = load_config(overrides=quickstart.get_config_overrides(), apply_env=False)
    return Pipeline(tmp_path_factory.mktemp("completed") / "run", cfg).run()
