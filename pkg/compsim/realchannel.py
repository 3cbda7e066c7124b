# -*- coding: utf-8 -*-
"""CompSim module for the synthetic real-world channel.

The real channel renders the same state sequence as the sim channel through the same camera, then applies a
deterministic appearance gap: per-material color remapping, a static table texture, a linear lighting gradient, a
vignette, and seeded per-frame pixel noise. Geometry is shared with the simulator, so every (sim, real, actions) triple
is aligned by construction.

Attributes:
    logger (Logger): Module level logger for usage and debugging.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import ndimage

from compsim.blockworld import rasterize, render_sim, schedule_task
from compsim.config import ExperimentConfig, resolve_config
from compsim.logger import get_logger
from compsim.models import (
    AppearanceParams, CameraModel, EpisodeRecord, PairedEpisode, TaskSpec, Trajectory, WorldState
)
from compsim.utils import derive_seed, to_uint8

logger = get_logger(__name__)


@lru_cache(maxsize=16)
def _table_texture(texture_seed: int, height: int, width: int) -> np.ndarray:
    noise = np.random.default_rng(texture_seed).standard_normal((height, width))
    smooth = ndimage.gaussian_filter(noise, sigma=1.5, mode="wrap")
    smooth = smooth / (smooth.std() or 1.0)
    smooth.setflags(write=False)
    return smooth


def episode_seed(task: TaskSpec, seed: int) -> int:
    """Seed of an episode's real-channel noise stream.

    Args:
        task (TaskSpec): Task variant.
        seed (int): Episode seed.

    Returns:
        int: Noise stream seed.

    """
    return derive_seed("real", task.label, task.init_region, task.object_variant, int(seed))


def render_real(state: WorldState, camera: CameraModel, params: AppearanceParams, episode_seed: int,
                cfg: Optional[ExperimentConfig] = None, frame_index: Optional[int] = None) -> np.ndarray:
    """Render a state in the real channel.

    Args:
        state (WorldState): State to render.
        camera (CameraModel): Camera (the same calibrated camera as the sim channel).
        params (AppearanceParams): Appearance gap.
        episode_seed (int): Noise stream seed of the episode.
        cfg (ExperimentConfig, optional): Experiment configuration.
        frame_index (int, optional): Index of the frame in its episode (defaults to state.step_index).

    Returns:
        np.ndarray: float64 frame of shape (height, width, 3) with values in [0, 1].

    """
    cfg = resolve_config(cfg)
    params.validate()
    material, palette = rasterize(state, camera, cfg)
    colors = np.array([
        params.color_remap.get(entry["material"], params.color_remap.get(f"shape:{entry['shape']}", entry["rgb"]))
        for entry in palette
    ], dtype=np.float64)
    frame = colors[material]
    height, width = material.shape

    if params.texture_strength > 0:
        table = material == 0
        frame[table] += params.texture_strength * _table_texture(params.texture_seed, height, width)[table][:, None]

    if params.lighting_strength > 0 and any(params.lighting_direction):
        direction = np.asarray(params.lighting_direction, dtype=np.float64)
        direction = direction / np.linalg.norm(direction)
        vs, us = np.mgrid[0:height, 0:width].astype(np.float64)
        gradient = direction[0] * (us - (width - 1) / 2.0) + direction[1] * (vs - (height - 1) / 2.0)
        gradient = gradient / (np.abs(gradient).max() or 1.0)
        frame *= (1.0 + params.lighting_strength * gradient)[..., None]

    if params.vignette_strength > 0:
        vs, us = np.mgrid[0:height, 0:width].astype(np.float64)
        half_w, half_h = (width - 1) / 2.0, (height - 1) / 2.0
        radius2 = ((us - half_w) ** 2 + (vs - half_h) ** 2) / (half_w ** 2 + half_h ** 2 or 1.0)
        frame *= (1.0 - params.vignette_strength * radius2 / 2.0)[..., None]

    if params.noise_sigma > 0:
        index = state.step_index if frame_index is None else frame_index
        rng = np.random.default_rng([int(episode_seed), int(index)])
        frame += rng.normal(0.0, params.noise_sigma, size=frame.shape)

    return np.clip(frame, 0.0, 1.0)


def _record(trajectory: Trajectory, channel: str, frames: np.ndarray, camera: CameraModel,
            cfg: ExperimentConfig, provenance: dict) -> EpisodeRecord:
    return EpisodeRecord({
        "task": trajectory.task, "seed": trajectory.seed, "channel": channel, "frames": frames,
        "actions": trajectory.actions, "states": trajectory.states, "camera": camera,
        "camera_file": cfg.camera_file, "provenance": provenance
    })


def generate_paired_episode(task: TaskSpec, seed: int, camera: Optional[CameraModel] = None,
                            params: Optional[AppearanceParams] = None,
                            cfg: Optional[ExperimentConfig] = None) -> PairedEpisode:
    """Schedule one demonstration and render it in both channels.

    Args:
        task (TaskSpec): Task variant.
        seed (int): Episode seed.
        camera (CameraModel, optional): Camera (configured camera by default).
        params (AppearanceParams, optional): Appearance gap (configured appearance by default).
        cfg (ExperimentConfig, optional): Experiment configuration.

    Returns:
        PairedEpisode: Sim and real records sharing one action list and one state trace.

    """
    cfg = resolve_config(cfg)
    camera = camera or cfg.camera_model()
    params = params or cfg.appearance_params()
    trajectory = schedule_task(task, seed, cfg)
    noise_seed = episode_seed(task, seed)

    sim_frames = np.stack([to_uint8(render_sim(state, camera, cfg)) for state in trajectory.states])
    real_frames = np.stack([
        to_uint8(render_real(state, camera, params, noise_seed, cfg, frame_index=index))
        for index, state in enumerate(trajectory.states)
    ])
    primitives = [p.describe() for p in trajectory.primitives]
    sim = _record(trajectory, "sim", sim_frames, camera, cfg, {"renderer": "blockworld", "primitives": primitives})
    real = _record(trajectory, "real", real_frames, camera, cfg, {
        "renderer": "realchannel", "episode_seed": noise_seed, "appearance": params.serialized(),
        "primitives": primitives
    })
    logger.debug(f"Generated paired episode {sim.pair_key} ({len(sim_frames)} frames).")
    return PairedEpisode({"sim": sim, "real": real})


def generate_sim_episode(task: TaskSpec, seed: int, camera: Optional[CameraModel] = None,
                         cfg: Optional[ExperimentConfig] = None) -> EpisodeRecord:
    """Schedule one demonstration and render it in the sim channel only.

    Args:
        task (TaskSpec): Task variant.
        seed (int): Episode seed.
        camera (CameraModel, optional): Camera (configured camera by default).
        cfg (ExperimentConfig, optional): Experiment configuration.

    Returns:
        EpisodeRecord: Sim record whose real counterpart can later be rendered with :func:`regenerate_real_episode`.

    """
    cfg = resolve_config(cfg)
    camera = camera or cfg.camera_model()
    trajectory = schedule_task(task, seed, cfg)
    frames = np.stack([to_uint8(render_sim(state, camera, cfg)) for state in trajectory.states])
    return _record(trajectory, "sim", frames, camera, cfg, {
        "renderer": "blockworld", "primitives": [p.describe() for p in trajectory.primitives]
    })


def regenerate_real_episode(sim_record: EpisodeRecord, params: Optional[AppearanceParams] = None,
                            cfg: Optional[ExperimentConfig] = None,
                            camera: Optional[CameraModel] = None) -> EpisodeRecord:
    """Render the real channel of a stored sim episode from its state trace.

    Args:
        sim_record (EpisodeRecord): Sim episode with its states.
        params (AppearanceParams, optional): Appearance gap (configured appearance by default).
        cfg (ExperimentConfig, optional): Experiment configuration.
        camera (CameraModel, optional): Camera (the sim episode's camera by default).

    Returns:
        EpisodeRecord: Real-channel record sharing the sim episode's actions and states.

    """
    cfg = resolve_config(cfg)
    params = params or cfg.appearance_params()
    camera = camera or sim_record.camera or cfg.camera_model()
    noise_seed = episode_seed(sim_record.task, sim_record.seed)
    frames = np.stack([
        to_uint8(render_real(state, camera, params, noise_seed, cfg, frame_index=index))
        for index, state in enumerate(sim_record.states)
    ])
    provenance = {"renderer": "realchannel", "episode_seed": noise_seed, "appearance": params.serialized(),
                  "source_episode": sim_record.episode_id}
    real = sim_record.with_channel("real", frames, provenance)
    real.camera = camera
    return real
