# -*- coding: utf-8 -*-
"""CompSim demo.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import os
from logging import DEBUG
from pathlib import Path

from dotenv import load_dotenv

from compsim.blockworld import check_success, sample_initial_state, schedule_task
from compsim.config import load_config
from compsim.dataset import EpisodeStore
from compsim.logger import get_logger
from compsim.models import TaskSpec
from compsim.pipeline import Pipeline
from compsim.policy import ExpertPolicy, RandomPolicy, build_regime, rollout
from compsim.realchannel import generate_paired_episode

"""
Every query below runs on a deliberately tiny configuration (a handful of episodes and a single training epoch per
stage) so that each call finishes quickly on a CPU. Use config/experiment.json for full-size runs.
"""

# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# ENVIRONMENT SETUP # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

# load .env file in order to read local environment variables
load_dotenv(dotenv_path=Path(__file__).parent.parent / "config" / ".env")

# set target directory for data output
data_dir = Path(__file__).parent / "output"


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# VARIABLE SETUP  # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #


# set desired global seed
def get_seed():
    seed = 0
    return seed


seed = get_seed()


# set desired task label
def get_task_label():
    # task_label = "shake_bottle"
    # task_label = "stack_blocks_two"
    task_label = "move_card_away"
    # task_label = "move_card_away_cluttered"
    # task_label = "place_pad_colored"
    # task_label = "handover_cluttered"
    return task_label


task_label = get_task_label()


# set desired initial region
def get_init_region():
    init_region = "in_domain"
    # init_region = "ood_spatial"
    return init_region


init_region = get_init_region()


# set desired guidance variant for pseudo-real synthesis
def get_variant():
    # variant = "cd"
    # variant = "vd"
    variant = "full"
    return variant


variant = get_variant()


# set desired policy data-mixture regime
def get_regime_name():
    # regime_name = "r10"
    # regime_name = "r20"
    # regime_name = "sim200_pre_r10"
    # regime_name = "r10_sim200"
    # regime_name = "pseudo200"
    regime_name = "r10_pseudo200"
    return regime_name


regime_name = get_regime_name()


# set desired number of episodes per task label
def get_episodes():
    episodes = 2
    return episodes


episodes = get_episodes()


# set tiny configuration overrides so every stage runs in seconds
def get_config_overrides():
    config_overrides = {
        "seed": seed,
        "tasks": {
            "train": ["shake_bottle", "move_card_away"],
            "train_episodes": episodes,
            "heldout": ["move_card_away"],
            "heldout_episodes": 1,
            "policy": ["move_card_away"],
            "policy_sim_episodes": episodes
        },
        "neuralsim": {
            "T": 10,
            "base_channels": 8,
            "epochs": 1,
            "batch_size": 4,
            "frames_per_pair": 2,
            "val_frames_per_pair": 1,
            "sampling_steps": 2,
            "sample_batch": 8
        },
        "policy": {
            "epochs": 1,
            "finetune_epochs": 1,
            "steps_per_epoch": 2,
            "batch_size": 4,
            "count_scale": 0.01,
            "regimes": ["r10", regime_name],
            "suites": {
                "in_domain": {"trials": 2, "base_seed": 10000},
                "ood_spatial": {"trials": 2, "base_seed": 20000},
                "ood_object": {"trials": 0, "base_seed": 30000}
            }
        }
    }
    return config_overrides


config_overrides = get_config_overrides()


# set experiment configuration (defaults merged with the tiny overrides, COMPSIM_JOBS applied from the environment)
def get_config():
    config = load_config(overrides=config_overrides)
    return config


config = get_config()


# set desired task variant
def get_task():
    task = TaskSpec.from_label(task_label, init_region)
    return task


task = get_task()


# set run directory for the cached stage pipeline
def get_run_dir():
    run_dir = data_dir / f"run-{config.config_hash[:12]}"
    return run_dir


run_dir = get_run_dir()

# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# QUERY SETUP # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

# configure the CompSim pipeline (stages are cached by manifest inside run_dir)
pipeline = Pipeline(run_dir, config)

# manually override the log level of the scheduler and renderers (COMPSIM_LOG_LEVEL in config/.env sets all modules)
logger = get_logger("compsim.blockworld", DEBUG)

# configure an episode store for ad hoc episodes
store = EpisodeStore(data_dir / "episodes")

# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# RUN QUERIES # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

# print(repr(config.resolved()))
# print(repr(sample_initial_state(task, seed, config)))
# print(repr(schedule_task(task, seed, config)))
# demo = schedule_task(task, seed, config)
# print(repr(check_success(task, demo.states[-1], demo.states, config)))
# print(repr(store.write(generate_paired_episode(task, seed, cfg=config).sim)))
# print(repr(store.consolidate()))
# print(repr(build_regime(regime_name, config)))
# print(repr(rollout(ExpertPolicy(), task, seed, config)[0]))
# print(repr(rollout(RandomPolicy(), task, seed, config)[0]))
# print(repr(pipeline.dataset_plans()))
# print(repr(pipeline.run(["gen-sim", "gen-real"])))
# print(repr(pipeline.run(["calibrate"])))
# print(repr(pipeline.run(["train-neuralsim", "synthesize", "eval-video"])))
# print(repr(pipeline.run(["train-policy", "eval-policy", "report"])))
# print(repr(pipeline.run()))
# print(repr(sorted(os.listdir(run_dir))))
