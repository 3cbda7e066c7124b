# -*- coding: utf-8 -*-
"""Pytest top-level conftest.py.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import pytest

from compsim.config import ExperimentConfig, default_config


@pytest.fixture
def show_log_output():
    """Turn on/off example code stdout logging output.

    Returns:
        bool: Boolean value representing if log output is turned on or off.

    """
    log_output = False
    return log_output


@pytest.fixture
def cfg() -> ExperimentConfig:
    """Default experiment configuration."""
    return default_config()
