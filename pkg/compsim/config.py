# -*- coding: utf-8 -*-
"""CompSim module for loading, validating, and echoing experiment configuration.

An experiment configuration is a JSON file merged over :data:`DEFAULT_CONFIG`. Every value is validated before any
stage runs and every problem is reported at once. Two environment variables (typically set in a .env file) override
runtime settings: ``COMPSIM_JOBS`` (worker cap) and ``COMPSIM_LOG_LEVEL`` (see :mod:`compsim.logger`).

Attributes:
    logger (Logger): Module level logger for usage and debugging.
    DEFAULT_CONFIG (dict): Complete default configuration.
    TRAIN_LABELS (list[str]): Task variants used for neural simulator training pairs.
    HELDOUT_LABELS (list[str]): Task variants of the video evaluation suite.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import copy
import json
import math
import os
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Union

from compsim.exceptions import ConfigValidationError
from compsim.logger import get_logger
from compsim.models import (
    AppearanceParams, CameraModel, CompSimObject, GuidanceWeights, REGIME_NAMES, SUITE_KINDS, TaskSpec
)
from compsim.utils import config_hash

logger = get_logger(__name__)

JOBS_ENV_VAR = "COMPSIM_JOBS"

TRAIN_LABELS = [
    "shake_bottle", "stack_blocks_two", "move_card_away", "move_card_away_cluttered", "move_card_away_colored",
    "place_pad", "place_pad_cluttered", "place_pad_colored", "handover", "handover_cluttered"
]
HELDOUT_LABELS = [
    "shake_bottle", "stack_blocks_two", "move_card_away", "move_card_away_cluttered", "move_card_away_colored",
    "place_pad_cluttered", "place_pad_colored", "handover_cluttered"
]

DEFAULT_CONFIG: Dict[str, Any] = {
    "seed": 0,
    "jobs": 1,
    "camera_file": None,
    "output_root": "runs",
    "world": {
        "table_size": 0.6,
        "lattice": 0.05,
        "z_max": 0.3,
        "max_step": 0.02,
        "grasp_radius": 0.03,
        "lift_height": 0.12,
        "h_min": 0.10,
        "approach_height": 0.08,
        "stack_tolerance": 0.01,
        "central_region": [0.2, 0.4],
        "n_min_sign_changes": 3,
        "gripper_home": [0.30, 0.30, 0.15],
        "receiver_pose": [0.50, 0.30, 0.12],
        "retry_budget": 5,
        "clutter_count": 3,
        "clutter_clearance": 0.12
    },
    "render": {
        "width": 64,
        "height": 64,
        "table_color": [0.55, 0.45, 0.35],
        "colored_table_color": [0.25, 0.45, 0.65],
        "gripper_color": [0.85, 0.85, 0.85],
        "ring_color": [0.95, 0.2, 0.2],
        "receiver_color": [0.6, 0.6, 0.6]
    },
    "camera": {
        "fx": 100.0,
        "fy": 100.0,
        "cx": 31.5,
        "cy": 31.5,
        "R": [1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0],
        "t": [-0.3, 0.3, 1.0]
    },
    "appearance": {
        "color_remap": {
            "gripper": [0.08, 0.08, 0.08],
            "receiver": [0.08, 0.08, 0.08],
            "table:default": [0.45, 0.38, 0.30],
            "table:colored": [0.20, 0.36, 0.52]
        },
        "lighting_direction": [1.0, 1.0],
        "lighting_strength": 0.25,
        "vignette_strength": 0.3,
        "noise_sigma": 0.02,
        "texture_seed": 7,
        "texture_strength": 0.03
    },
    "tasks": {
        "train": list(TRAIN_LABELS),
        "train_episodes": 20,
        "heldout": list(HELDOUT_LABELS),
        "heldout_episodes": 5,
        "heldout_seed_offset": 1000,
        "policy": ["shake_bottle", "move_card_away"],
        "policy_sim_episodes": 200,
        "policy_seed_offset": 5000
    },
    "calibration": {
        "inner_rows": 6,
        "inner_cols": 9,
        "square_size": 0.04,
        "yaw": 10.0,
        "upsample": 4,
        "supersample": 4
    },
    "neuralsim": {
        "T": 50,
        "beta_start": 1e-4,
        "beta_end": 0.02,
        "base_channels": 32,
        "window_visual": 3,
        "window_action": 4,
        "epochs": 40,
        "batch_size": 32,
        "frames_per_pair": 8,
        "lr": 2e-4,
        "weight_decay": 1e-4,
        "warmup_ratio": 0.01,
        "p_drop": 0.1,
        "p_drop_both": 0.05,
        "pixel_loss_weight": 0.0,
        "val_fraction": 0.2,
        "val_frames_per_pair": 2,
        "sampling_steps": 10,
        "sample_batch": 32,
        "joint_mode": False,
        "variants": {
            "cd": [0.0, 1.5],
            "vd": [1.5, 0.0],
            "full": [1.5, 1.5]
        }
    },
    "policy": {
        "obs_steps": 3,
        "pred_horizon": 8,
        "action_steps": 6,
        "downsample": 2,
        "step_budget": 160,
        "epochs": 30,
        "finetune_epochs": 15,
        "steps_per_epoch": 40,
        "batch_size": 64,
        "lr": 1e-3,
        "weight_decay": 1e-6,
        "count_scale": 1.0,
        "regimes": list(REGIME_NAMES),
        "suites": {
            "in_domain": {"trials": 30, "base_seed": 10000},
            "ood_spatial": {"trials": 30, "base_seed": 20000},
            "ood_object": {"trials": 30, "base_seed": 30000}
        },
        "pseudo_variant": "full"
    }
}

Check = Callable[[Any], Optional[str]]


def _number(lo: Optional[float] = None, hi: Optional[float] = None, strict_lo: bool = False) -> Check:
    def check(value: Any) -> Optional[str]:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            return f"expected a finite number, got {value!r}"
        if lo is not None and (value <= lo if strict_lo else value < lo):
            return f"must be {'>' if strict_lo else '>='} {lo}, got {value}"
        if hi is not None and value > hi:
            return f"must be <= {hi}, got {value}"
        return None
    return check


def _integer(lo: Optional[int] = None, hi: Optional[int] = None) -> Check:
    def check(value: Any) -> Optional[str]:
        if isinstance(value, bool) or not isinstance(value, int):
            return f"expected an integer, got {value!r}"
        if lo is not None and value < lo:
            return f"must be >= {lo}, got {value}"
        if hi is not None and value > hi:
            return f"must be <= {hi}, got {value}"
        return None
    return check


def _boolean(value: Any) -> Optional[str]:
    return None if isinstance(value, bool) else f"expected true/false, got {value!r}"


def _vector(length: int, lo: Optional[float] = None, hi: Optional[float] = None) -> Check:
    element = _number(lo, hi)

    def check(value: Any) -> Optional[str]:
        if not isinstance(value, list) or len(value) != length:
            return f"expected a list of {length} numbers, got {value!r}"
        for item in value:
            problem = element(item)
            if problem:
                return problem
        return None
    return check


def _optional_path(value: Any) -> Optional[str]:
    return None if value is None or isinstance(value, str) else f"expected a path string or null, got {value!r}"


def _string(value: Any) -> Optional[str]:
    return None if isinstance(value, str) and value else f"expected a non-empty string, got {value!r}"


def _labels(value: Any) -> Optional[str]:
    if not isinstance(value, list):
        return f"expected a list of task labels, got {value!r}"
    for label in value:
        if not isinstance(label, str):
            return f"expected task label strings, got {label!r}"
        try:
            TaskSpec.from_label(label).validate()
        except ValueError as err:
            return f"unknown task label \"{label}\" ({err})"
    return None


def _choice_list(choices) -> Check:
    def check(value: Any) -> Optional[str]:
        if not isinstance(value, list) or any(v not in choices for v in value):
            return f"expected a list drawn from {list(choices)}, got {value!r}"
        return None
    return check


def _color_remap(value: Any) -> Optional[str]:
    if not isinstance(value, dict):
        return f"expected an object of material -> RGB, got {value!r}"
    rgb = _vector(3, 0.0, 1.0)
    for material, color in value.items():
        problem = rgb(color)
        if problem:
            return f"[{material}] {problem}"
    return None


def _variants(value: Any) -> Optional[str]:
    if not isinstance(value, dict) or not value:
        return f"expected an object of variant -> [w_v, w_a], got {value!r}"
    pair = _vector(2, 0.0)
    for name, weights in value.items():
        problem = pair(weights)
        if problem:
            return f"[{name}] {problem}"
    return None


def _suites(value: Any) -> Optional[str]:
    if not isinstance(value, dict):
        return f"expected an object of suite -> settings, got {value!r}"
    for kind, settings in value.items():
        if kind not in SUITE_KINDS:
            return f"unknown suite \"{kind}\""
        if not isinstance(settings, dict) or set(settings) != {"trials", "base_seed"}:
            return f"[{kind}] expected keys trials and base_seed"
        for key in ("trials", "base_seed"):
            problem = _integer(0)(settings[key])
            if problem:
                return f"[{kind}.{key}] {problem}"
    return None


SCHEMA: Dict[str, Any] = {
    "seed": _integer(0),
    "jobs": _integer(1),
    "camera_file": _optional_path,
    "output_root": _string,
    "world": {
        "table_size": _number(0.0, strict_lo=True),
        "lattice": _number(0.0, strict_lo=True),
        "z_max": _number(0.0, strict_lo=True),
        "max_step": _number(0.0, strict_lo=True),
        "grasp_radius": _number(0.0, strict_lo=True),
        "lift_height": _number(0.0, strict_lo=True),
        "h_min": _number(0.0, strict_lo=True),
        "approach_height": _number(0.0, strict_lo=True),
        "stack_tolerance": _number(0.0, strict_lo=True),
        "central_region": _vector(2, 0.0),
        "n_min_sign_changes": _integer(1),
        "gripper_home": _vector(3, 0.0),
        "receiver_pose": _vector(3, 0.0),
        "retry_budget": _integer(1),
        "clutter_count": _integer(0),
        "clutter_clearance": _number(0.0)
    },
    "render": {
        "width": _integer(8),
        "height": _integer(8),
        "table_color": _vector(3, 0.0, 1.0),
        "colored_table_color": _vector(3, 0.0, 1.0),
        "gripper_color": _vector(3, 0.0, 1.0),
        "ring_color": _vector(3, 0.0, 1.0),
        "receiver_color": _vector(3, 0.0, 1.0)
    },
    "camera": {
        "fx": _number(0.0, strict_lo=True),
        "fy": _number(0.0, strict_lo=True),
        "cx": _number(),
        "cy": _number(),
        "R": _vector(9),
        "t": _vector(3)
    },
    "appearance": {
        "color_remap": _color_remap,
        "lighting_direction": _vector(2),
        "lighting_strength": _number(0.0),
        "vignette_strength": _number(0.0, 1.0),
        "noise_sigma": _number(0.0),
        "texture_seed": _integer(0),
        "texture_strength": _number(0.0)
    },
    "tasks": {
        "train": _labels,
        "train_episodes": _integer(0),
        "heldout": _labels,
        "heldout_episodes": _integer(0),
        "heldout_seed_offset": _integer(0),
        "policy": _labels,
        "policy_sim_episodes": _integer(0),
        "policy_seed_offset": _integer(0)
    },
    "calibration": {
        "inner_rows": _integer(3),
        "inner_cols": _integer(3),
        "square_size": _number(0.0, strict_lo=True),
        "yaw": _number(-45.0, 45.0),
        "upsample": _integer(1, 8),
        "supersample": _integer(1, 8)
    },
    "neuralsim": {
        "T": _integer(1),
        "beta_start": _number(0.0, 1.0, strict_lo=True),
        "beta_end": _number(0.0, 1.0, strict_lo=True),
        "base_channels": _integer(4),
        "window_visual": _integer(1),
        "window_action": _integer(1),
        "epochs": _integer(1),
        "batch_size": _integer(1),
        "frames_per_pair": _integer(1),
        "lr": _number(0.0, strict_lo=True),
        "weight_decay": _number(0.0),
        "warmup_ratio": _number(0.0, 1.0),
        "p_drop": _number(0.0, 1.0),
        "p_drop_both": _number(0.0, 1.0),
        "pixel_loss_weight": _number(0.0),
        "val_fraction": _number(0.0, 1.0),
        "val_frames_per_pair": _integer(1),
        "sampling_steps": _integer(1),
        "sample_batch": _integer(1),
        "joint_mode": _boolean,
        "variants": _variants
    },
    "policy": {
        "obs_steps": _integer(1),
        "pred_horizon": _integer(1),
        "action_steps": _integer(1),
        "downsample": _integer(1),
        "step_budget": _integer(1),
        "epochs": _integer(1),
        "finetune_epochs": _integer(0),
        "steps_per_epoch": _integer(1),
        "batch_size": _integer(1),
        "lr": _number(0.0, strict_lo=True),
        "weight_decay": _number(0.0),
        "count_scale": _number(0.0, 1.0, strict_lo=True),
        "regimes": _choice_list(REGIME_NAMES),
        "suites": _suites,
        "pseudo_variant": _string
    }
}


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict) and key in SCHEMA_SECTIONS:
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


SCHEMA_SECTIONS = {key for key, value in SCHEMA.items() if isinstance(value, dict)}


def _validate(data: Dict[str, Any], schema: Dict[str, Any], prefix: str, errors: List[str]) -> None:
    for key in data:
        if key not in schema:
            errors.append(f"{prefix}{key}: unknown key")
    for key, rule in schema.items():
        if key not in data:
            errors.append(f"{prefix}{key}: missing")
            continue
        if isinstance(rule, dict):
            if not isinstance(data[key], dict):
                errors.append(f"{prefix}{key}: expected an object")
            else:
                _validate(data[key], rule, f"{prefix}{key}.", errors)
        else:
            problem = rule(data[key])
            if problem:
                errors.append(f"{prefix}{key}: {problem}")


def _cross_validate(data: Dict[str, Any], errors: List[str]) -> None:
    world = data.get("world", {})
    neuralsim = data.get("neuralsim", {})
    policy = data.get("policy", {})
    try:
        if world["h_min"] > world["lift_height"]:
            errors.append("world.h_min: must not exceed world.lift_height")
        if world["lift_height"] > world["z_max"]:
            errors.append("world.lift_height: must not exceed world.z_max")
        low, high = world["central_region"]
        if not 0 <= low < high <= world["table_size"]:
            errors.append("world.central_region: expected [low, high] inside the table")
    except (KeyError, TypeError, ValueError):
        pass
    try:
        if not neuralsim["beta_start"] < neuralsim["beta_end"]:
            errors.append("neuralsim.beta_end: must be greater than neuralsim.beta_start")
        if neuralsim["sampling_steps"] > neuralsim["T"]:
            errors.append("neuralsim.sampling_steps: must not exceed neuralsim.T")
        if policy["pseudo_variant"] not in neuralsim["variants"]:
            errors.append(f"policy.pseudo_variant: \"{policy['pseudo_variant']}\" is not a neuralsim variant")
    except (KeyError, TypeError):
        pass
    try:
        if policy["action_steps"] > policy["pred_horizon"]:
            errors.append("policy.action_steps: must not exceed policy.pred_horizon")
    except (KeyError, TypeError):
        pass


def validate_config_data(data: Dict[str, Any], path: Optional[str] = None) -> None:
    """Validate a fully merged configuration dictionary.

    Args:
        data (dict): Merged configuration.
        path (str, optional): Source file, reported in the exception.

    Raises:
        ConfigValidationError: Listing every problem found.

    """
    errors: List[str] = []
    _validate(data, SCHEMA, "", errors)
    if not errors:
        _cross_validate(data, errors)
    if errors:
        for error in errors:
            logger.error(f"Config: {error}")
        raise ConfigValidationError(errors, path=path)


class ExperimentConfig(CompSimObject):
    """Model class for a resolved experiment configuration.
    """

    def __init__(self, extracted_data):
        """Instantiate the ExperimentConfig child class of CompSimObject.

        Args:
            extracted_data (dict): Resolved (merged and validated) configuration data.

        Attributes:
            seed (int): Global seed.
            jobs (int): Worker cap for parallel stages.
            camera_file (str | None): camera.json used by both renderers (nominal camera when unset).
            output_root (str): Directory under which run directories are created.
            world (dict): Tabletop constants.
            render (dict): Renderer resolution and sim colors.
            camera (dict): Nominal camera.
            appearance (dict): Real-channel appearance parameters.
            tasks (dict): Task variants and episode counts per dataset.
            calibration (dict): Calibration target settings.
            neuralsim (dict): Neural simulator hyperparameters and guidance variants.
            policy (dict): Policy hyperparameters, regimes, and suites.

        """
        CompSimObject.__init__(self, extracted_data)
        self.seed: int = self._extracted_data.get("seed", DEFAULT_CONFIG["seed"])
        self.jobs: int = self._extracted_data.get("jobs", DEFAULT_CONFIG["jobs"])
        self.camera_file: Optional[str] = self._extracted_data.get("camera_file", None)
        self.output_root: str = self._extracted_data.get("output_root", DEFAULT_CONFIG["output_root"])
        for section in SCHEMA_SECTIONS:
            setattr(self, section, copy.deepcopy(self._extracted_data.get(section, DEFAULT_CONFIG[section])))

    @property
    def config_hash(self) -> str:
        return config_hash(self.resolved())

    def resolved(self) -> Dict[str, Any]:
        """Full configuration including defaults, as echoed into run manifests.

        Returns:
            dict: Resolved configuration.

        """
        return self.serialized()

    def camera_model(self) -> CameraModel:
        """Camera used by both renderers: camera_file when set, otherwise the nominal camera.

        Returns:
            CameraModel: Validated camera.

        """
        if self.camera_file:
            return CameraModel.from_json_file(self.camera_file)
        camera = CameraModel(dict(self.camera, width=self.render["width"], height=self.render["height"]))
        camera.validate()
        return camera

    def appearance_params(self) -> AppearanceParams:
        return AppearanceParams(self.appearance)

    def guidance(self, variant: str) -> GuidanceWeights:
        w_v, w_a = self.neuralsim["variants"][variant]
        return GuidanceWeights({"w_v": w_v, "w_a": w_a, "joint_mode": self.neuralsim["joint_mode"]})

    def with_overrides(self, overrides: Dict[str, Any]) -> "ExperimentConfig":
        """Merge overrides into this configuration and validate the result.

        Args:
            overrides (dict): Partial configuration.

        Returns:
            ExperimentConfig: New validated configuration.

        """
        merged = _merge(self.resolved(), overrides)
        validate_config_data(merged)
        return ExperimentConfig(merged)


def default_config() -> ExperimentConfig:
    return ExperimentConfig(copy.deepcopy(DEFAULT_CONFIG))


def resolve_config(cfg: Optional[ExperimentConfig]) -> ExperimentConfig:
    return cfg if cfg is not None else default_config()


def load_config(config_path: Union[Path, str, None] = None, overrides: Optional[Dict[str, Any]] = None,
                apply_env: bool = True) -> ExperimentConfig:
    """Load an experiment configuration file merged over the defaults, then validate it.

    Args:
        config_path (Path | str, optional): JSON configuration file (defaults only when omitted).
        overrides (dict, optional): Partial configuration applied after the file.
        apply_env (bool): Apply the COMPSIM_JOBS environment override.

    Returns:
        ExperimentConfig: Validated configuration.

    Raises:
        ConfigValidationError: When the file cannot be parsed or any value is invalid.

    """
    data: Dict[str, Any] = {}
    if config_path is not None:
        try:
            with open(config_path, "r", encoding="utf-8") as config_file:
                data = json.load(config_file)
        except FileNotFoundError:
            raise ConfigValidationError([f"config file not found: {config_path}"], path=str(config_path))
        except json.JSONDecodeError as err:
            raise ConfigValidationError([f"config file is not valid JSON: {err}"], path=str(config_path))
        if not isinstance(data, dict):
            raise ConfigValidationError(["config file must contain a JSON object"], path=str(config_path))

    merged = _merge(DEFAULT_CONFIG, data)
    if overrides:
        merged = _merge(merged, overrides)
    if apply_env and os.environ.get(JOBS_ENV_VAR):
        try:
            merged["jobs"] = int(os.environ[JOBS_ENV_VAR])
        except ValueError:
            raise ConfigValidationError([f"{JOBS_ENV_VAR}: expected an integer, got {os.environ[JOBS_ENV_VAR]!r}"])

    validate_config_data(merged, path=str(config_path) if config_path is not None else None)
    logger.debug(f"Loaded experiment configuration from {config_path or 'defaults'}.")
    return ExperimentConfig(merged)
