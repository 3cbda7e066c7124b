# -*- coding: utf-8 -*-
"""Pytest unit test conftest.py.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import pytest

from compsim.config import ExperimentConfig, load_config
from compsim.models import TaskSpec
from compsim.realchannel import generate_paired_episode


@pytest.fixture
def small_cfg() -> ExperimentConfig:
    """Default world and camera with a small neural simulator and policy so that training runs in seconds."""
    return load_config(apply_env=False, overrides={
        "neuralsim": {
            "T": 10, "base_channels": 8, "epochs": 1, "batch_size": 4, "frames_per_pair": 2,
            "val_frames_per_pair": 1, "sampling_steps": 2, "sample_batch": 8
        },
        "policy": {
            "epochs": 1, "finetune_epochs": 1, "steps_per_epoch": 2, "batch_size": 4, "count_scale": 0.01
        }
    })


@pytest.fixture
def card_task() -> TaskSpec:
    return TaskSpec.from_label("move_card_away")


@pytest.fixture
def card_pair(card_task, cfg):
    """Paired sim/real episode of move_card_away with seed 0."""
    return generate_paired_episode(card_task, 0, cfg=cfg)
