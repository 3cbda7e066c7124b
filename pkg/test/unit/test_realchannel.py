# -*- coding: utf-8 -*-
"""Pytest unit tests for CompSim realchannel module.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import numpy as np
import pytest

from compsim.blockworld import rasterize, render_sim, sample_initial_state
from compsim.dataset import validate_alignment
from compsim.metrics import PSNR_CAP, psnr
from compsim.models import AppearanceParams, TaskSpec
from compsim.realchannel import (
    episode_seed, generate_paired_episode, generate_sim_episode, regenerate_real_episode, render_real
)


@pytest.mark.unit
def test_render_real_identity_matches_sim(cfg):
    """Unit test for the real channel without any appearance gap.

    Note:
        Tests :func:`~compsim.realchannel.render_real`.

    Returns:
        None

    """
    state = sample_initial_state(TaskSpec.from_label("place_pad_colored"), 2, cfg)
    camera = cfg.camera_model()
    assert np.array_equal(render_real(state, camera, AppearanceParams.identity(), 0, cfg),
                          render_sim(state, camera, cfg))


@pytest.mark.unit
def test_render_real_remaps_only_gripper(cfg):
    """Unit test for a noise-free appearance gap that only recolors the gripper.

    Note:
        Tests :func:`~compsim.realchannel.render_real`.

    Returns:
        None

    """
    state = sample_initial_state(TaskSpec.from_label("shake_bottle"), 0, cfg)
    camera = cfg.camera_model()
    params = AppearanceParams({"color_remap": {"gripper": [0.08, 0.08, 0.08]}})

    changed = np.any(render_real(state, camera, params, 0, cfg) != render_sim(state, camera, cfg), axis=-1)
    material, palette = rasterize(state, camera, cfg)
    gripper = np.isin(material, [i for i, entry in enumerate(palette) if entry["material"] == "gripper"])

    assert changed.any()
    assert np.array_equal(changed, gripper)


@pytest.mark.unit
def test_render_real_noise_is_seeded(cfg):
    """Unit test for the per-frame noise stream keyed by episode seed and frame index.

    Note:
        Tests :func:`~compsim.realchannel.render_real`.

    Returns:
        None

    """
    state = sample_initial_state(TaskSpec.from_label("handover"), 1, cfg)
    camera = cfg.camera_model()
    params = cfg.appearance_params()

    frame = render_real(state, camera, params, 11, cfg, frame_index=3)
    assert np.array_equal(frame, render_real(state, camera, params, 11, cfg, frame_index=3))
    assert not np.array_equal(frame, render_real(state, camera, params, 11, cfg, frame_index=4))
    assert not np.array_equal(frame, render_real(state, camera, params, 12, cfg, frame_index=3))
    assert frame.min() >= 0.0
    assert frame.max() <= 1.0

    with pytest.raises(ValueError):
        render_real(state, camera, AppearanceParams({"noise_sigma": -0.1}), 11, cfg)


@pytest.mark.unit
def test_episode_seed_distinguishes_variants():
    """Unit test for the real-channel noise seed of an episode.

    Note:
        Tests :func:`~compsim.realchannel.episode_seed`.

    Returns:
        None

    """
    task = TaskSpec.from_label("move_card_away")
    assert episode_seed(task, 0) == episode_seed(TaskSpec.from_label("move_card_away"), 0)
    assert episode_seed(task, 0) != episode_seed(task, 1)
    assert episode_seed(task, 0) != episode_seed(TaskSpec.from_label("move_card_away", "ood_spatial"), 0)


@pytest.mark.unit
def test_generate_paired_episode(card_pair, cfg):
    """Unit test for a sim/real pair sharing one action list and one state trace.

    Note:
        Tests :func:`~compsim.realchannel.generate_paired_episode`.

    Returns:
        None

    """
    sim, real = card_pair.sim, card_pair.real
    assert len(sim.frames) == len(real.frames) == len(sim.actions) + 1
    assert sim.actions == real.actions
    assert sim.states == real.states
    assert sim.frames.dtype == real.frames.dtype == np.uint8
    assert sim.episode_id == "move_card_away-s00000-sim"
    assert real.episode_id == "move_card_away-s00000-real"
    assert real.provenance["renderer"] == "realchannel"
    assert validate_alignment(card_pair, cfg).ok


@pytest.mark.unit
def test_generate_paired_episode_identity_gap(cfg):
    """Unit test for a pair rendered without an appearance gap.

    Note:
        Tests :func:`~compsim.realchannel.generate_paired_episode`.

    Returns:
        None

    """
    pair = generate_paired_episode(TaskSpec.from_label("stack_blocks_two"), 0, params=AppearanceParams.identity(),
                                   cfg=cfg)
    assert np.array_equal(pair.sim.frames, pair.real.frames)
    assert psnr(pair.sim.frames[0], pair.real.frames[0]) == PSNR_CAP


@pytest.mark.unit
def test_regenerate_real_episode_matches_pair(card_pair, card_task, cfg):
    """Unit test for rendering the real channel of a sim-only episode later.

    Note:
        Tests :func:`~compsim.realchannel.generate_sim_episode` and
        :func:`~compsim.realchannel.regenerate_real_episode`.

    Returns:
        None

    """
    sim = generate_sim_episode(card_task, 0, cfg=cfg)
    assert np.array_equal(sim.frames, card_pair.sim.frames)

    real = regenerate_real_episode(sim, cfg=cfg)
    assert real.channel == "real"
    assert real.episode_id == card_pair.real.episode_id
    assert np.array_equal(real.frames, card_pair.real.frames)
    assert real.provenance["source_episode"] == sim.episode_id
