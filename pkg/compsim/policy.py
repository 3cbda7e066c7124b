# -*- coding: utf-8 -*-
"""CompSim module for the behavior-cloning policy and the data-mixture regime evaluation harness.

A policy observes the last ``obs_steps`` real-channel frames, predicts ``pred_horizon`` actions, and executes the first
``action_steps`` of them before observing again. Policies are trained on one task from the episodes a
:class:`~compsim.models.Regime` names, and evaluated on shared, seeded trial suites.

Attributes:
    logger (Logger): Module level logger for usage and debugging.
    REGIMES (dict): Unscaled episode counts and training order of every named regime.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import copy
import csv
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from compsim.blockworld import check_success, sample_initial_state, schedule_task, step, supports_object_variant
from compsim.checkpoint import load_checkpoint, load_module, save_module
from compsim.config import ExperimentConfig, resolve_config
from compsim.dataset import build_mixture
from compsim.exceptions import BoundsError, CheckpointError, GenerationError, PolicyError, TrainingError
from compsim.logger import get_logger
from compsim.models import (
    EpisodeRecord, EvalSuite, LowLevelAction, MixtureSpec, Regime, TaskSpec, Trajectory, WorldState
)
from compsim.realchannel import episode_seed, render_real
from compsim.utils import derive_seed, to_uint8, to_unit

logger = get_logger(__name__)

ACTION_DIM = 6
REGIMES: Dict[str, Dict[str, Any]] = {
    "r10": {"counts": {"real": 10}, "order": "joint"},
    "r20": {"counts": {"real": 20}, "order": "joint"},
    "sim200_pre_r10": {"counts": {"sim": 200, "real": 10}, "order": "pretrain_finetune"},
    "r10_sim200": {"counts": {"real": 10, "sim": 200}, "order": "joint"},
    "r10_pseudo200": {"counts": {"real": 10, "pseudo": 200}, "order": "joint"},
    "pseudo200": {"counts": {"pseudo": 200}, "order": "joint"},
}
RESULT_COLUMNS = ["task", "suite", "regime", "successes", "trials"]


def build_regime(name: str, cfg: Optional[ExperimentConfig] = None) -> Regime:
    """Regime with its episode counts scaled by policy.count_scale (at least one episode per source).

    Args:
        name (str): Regime name.
        cfg (ExperimentConfig, optional): Experiment configuration.

    Returns:
        Regime: Regime whose alpha reproduces uniform sampling over the union of its sources.

    Raises:
        PolicyError: For an unknown regime name.

    """
    cfg = resolve_config(cfg)
    if name not in REGIMES:
        raise PolicyError(f"Unknown regime \"{name}\"; expected one of {sorted(REGIMES)}.")
    scale = cfg.policy["count_scale"]
    counts = {source: max(1, int(round(count * scale))) for source, count in REGIMES[name]["counts"].items()}
    synthetic = sum(count for source, count in counts.items() if source != "real")
    real = counts.get("real", 0)
    return Regime({"name": name, "counts": counts, "order": REGIMES[name]["order"],
                   "alpha": real / (real + synthetic)})


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# OBSERVATIONS  # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def downsample_frames(frames: np.ndarray, factor: int) -> np.ndarray:
    """Block-average (N, H, W, 3) frames by an integer factor into float32 values in [0, 1].
    """
    unit = to_unit(np.asarray(frames))
    if factor == 1:
        return unit.astype(np.float32)
    n, height, width, _ = unit.shape
    h, w = height // factor, width // factor
    blocks = unit[:, :h * factor, :w * factor].reshape(n, h, factor, w, factor, 3)
    return blocks.mean(axis=(2, 4)).astype(np.float32)


def observation_indices(k: int, obs_steps: int) -> List[int]:
    return [max(k - obs_steps + 1 + i, 0) for i in range(obs_steps)]


def chunk_targets(features: np.ndarray, k: int, horizon: int, max_step: float) -> np.ndarray:
    hold = LowLevelAction.hold().features(max_step)
    return np.stack([features[j] if j < len(features) else hold for j in range(k, k + horizon)])


def _observation_tensor(observations: np.ndarray) -> torch.Tensor:
    # (B, S, h, w, 3) in [0, 1] -> (B, S * 3, h, w) in [-1, 1]
    batch, steps, height, width, _ = observations.shape
    stacked = np.ascontiguousarray(observations.transpose(0, 1, 4, 2, 3)).reshape(batch, steps * 3, height, width)
    return torch.from_numpy(stacked.astype(np.float32)) * 2.0 - 1.0


class BCNetwork(nn.Module):
    """Convolutional encoder over the stacked observation window followed by an MLP predicting an action chunk.
    """

    def __init__(self, obs_steps: int, pred_horizon: int, height: int, width: int, channels: int = 16,
                 hidden: int = 256):
        super().__init__()
        self.pred_horizon = pred_horizon
        self.encoder = nn.Sequential(
            nn.Conv2d(3 * obs_steps, channels, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(channels, 2 * channels, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Conv2d(2 * channels, 2 * channels, 3, stride=2, padding=1),
            nn.ReLU(),
            nn.Flatten(),
        )
        with torch.no_grad():
            flat_dim = self.encoder(torch.zeros(1, 3 * obs_steps, height, width)).shape[1]
        self.head = nn.Sequential(
            nn.Linear(flat_dim, hidden),
            nn.ReLU(),
            nn.Linear(hidden, hidden),
            nn.ReLU(),
            nn.Linear(hidden, pred_horizon * ACTION_DIM),
        )

    def forward(self, observations: torch.Tensor) -> torch.Tensor:
        return self.head(self.encoder(observations)).view(-1, self.pred_horizon, ACTION_DIM)


class PolicyParams(object):
    """CompSim PolicyParams object bundling a behavior-cloning network with its observation settings.
    """

    def __init__(self, network: BCNetwork, settings: Dict[str, Any], regime: Optional[Regime] = None,
                 task: Optional[str] = None, episodes: Optional[Dict[str, List[str]]] = None,
                 losses: Optional[List[float]] = None):
        """Instantiate policy parameters.

        Args:
            network (BCNetwork): Policy network.
            settings (dict): obs_steps, pred_horizon, action_steps, downsample, observation height and width, max_step.
            regime (Regime, optional): Regime the policy was trained under.
            task (str, optional): Task label the policy was trained on.
            episodes (dict[str, list[str]], optional): Episode ids consumed per source.
            losses (list[float], optional): Mean training loss per epoch (both phases in order).

        """
        self.network: BCNetwork = network
        self.settings: Dict[str, Any] = dict(settings)
        self.regime: Optional[Regime] = regime
        self.task: Optional[str] = task
        self.episodes: Dict[str, List[str]] = dict(episodes or {})
        self.losses: List[float] = list(losses or [])

    @classmethod
    def from_config(cls, cfg: Optional[ExperimentConfig] = None, **kwargs) -> "PolicyParams":
        cfg = resolve_config(cfg)
        policy = cfg.policy
        settings = {
            "obs_steps": policy["obs_steps"], "pred_horizon": policy["pred_horizon"],
            "action_steps": policy["action_steps"], "downsample": policy["downsample"],
            "height": cfg.render["height"] // policy["downsample"],
            "width": cfg.render["width"] // policy["downsample"],
            "max_step": cfg.world["max_step"]
        }
        network = BCNetwork(settings["obs_steps"], settings["pred_horizon"], settings["height"], settings["width"])
        return cls(network, settings, **kwargs)

    def predict(self, frames: Sequence[np.ndarray]) -> List[LowLevelAction]:
        """Predict an action chunk from the frames observed so far.

        Args:
            frames (Sequence[np.ndarray]): Observed frames (H, W, 3), oldest first (at least one).

        Returns:
            list[LowLevelAction]: pred_horizon actions.

        """
        if not frames:
            raise PolicyError("A policy needs at least one observed frame.")
        indices = observation_indices(len(frames) - 1, self.settings["obs_steps"])
        window = downsample_frames(np.stack([frames[i] for i in indices]), self.settings["downsample"])
        self.network.eval()
        with torch.no_grad():
            prediction = self.network(_observation_tensor(window[None]))[0].to(torch.float64).numpy()
        return [LowLevelAction.from_features(row, self.settings["max_step"]) for row in prediction]

    def save(self, directory: Union[Path, str]) -> Path:
        header = {"kind": "policy", "settings": self.settings, "task": self.task, "episodes": self.episodes,
                  "losses": self.losses}
        if self.regime is not None:
            header["regime"] = self.regime
        return save_module(directory, self.network, header)

    @classmethod
    def load(cls, directory: Union[Path, str]) -> "PolicyParams":
        header, _ = load_checkpoint(directory)
        if header.get("kind") != "policy":
            raise CheckpointError(f"Checkpoint in {directory} is not a policy.", path=str(directory))
        settings = header["settings"]
        network = BCNetwork(settings["obs_steps"], settings["pred_horizon"], settings["height"], settings["width"])
        load_module(directory, network)
        regime = header.get("regime")
        return cls(network, settings, regime if isinstance(regime, Regime) else None, header.get("task"),
                   header.get("episodes"), header.get("losses"))


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# TRAINING  # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

class _EpisodeArrays(NamedTuple):
    observations: np.ndarray
    features: np.ndarray


def select_episodes(regime: Regime, episodes: Mapping[str, Sequence[EpisodeRecord]],
                    seed: int) -> Dict[str, List[EpisodeRecord]]:
    """Pick the episodes a regime consumes from each source.

    When a source holds more episodes than the regime needs (r10 draws from the 20 real demonstrations), a seeded subset
    is used.

    Args:
        regime (Regime): Regime.
        episodes (Mapping[str, Sequence[EpisodeRecord]]): Available episodes per source (real, sim, pseudo).
        seed (int): Selection seed.

    Returns:
        dict[str, list[EpisodeRecord]]: Selected episodes per source, sorted by episode id.

    Raises:
        PolicyError: When a source holds fewer episodes than the regime needs.

    """
    selected = {}
    for source, count in sorted(regime.counts.items()):
        available = sorted(episodes.get(source, []), key=lambda e: e.episode_id)
        if len(available) < count:
            raise PolicyError(f"Regime {regime.name} needs {count} {source} episodes but only {len(available)} exist.",
                              payload={"source": source, "required": count, "available": len(available)})
        if len(available) > count:
            rng = np.random.default_rng(derive_seed("policy-subset", regime.name, source, seed))
            picked = sorted(int(i) for i in rng.choice(len(available), size=count, replace=False))
            available = [available[i] for i in picked]
        selected[source] = available
    return selected


def _phases(regime: Regime, selected: Dict[str, List[EpisodeRecord]], cfg: ExperimentConfig,
            seed: int) -> List[Tuple[str, MixtureSpec, int]]:
    policy = cfg.policy
    real_ids = [e.episode_id for e in selected.get("real", [])]
    source = regime.synthetic_source
    synthetic_ids = [e.episode_id for e in selected.get(source, [])] if source else []
    channel = source or "pseudo"
    if regime.order == "pretrain_finetune":
        return [
            ("pretrain", MixtureSpec({"alpha": 0.0, "real_set": real_ids, "pseudo_set": synthetic_ids,
                                      "seed": derive_seed("policy-mixture", regime.name, "pretrain", seed),
                                      "synthetic_channel": channel}), policy["epochs"]),
            ("finetune", MixtureSpec({"alpha": 1.0, "real_set": real_ids, "pseudo_set": synthetic_ids,
                                      "seed": derive_seed("policy-mixture", regime.name, "finetune", seed),
                                      "synthetic_channel": channel}), policy["finetune_epochs"]),
        ]
    return [("joint", MixtureSpec({"alpha": regime.alpha, "real_set": real_ids, "pseudo_set": synthetic_ids,
                                   "seed": derive_seed("policy-mixture", regime.name, "joint", seed),
                                   "synthetic_channel": channel}), policy["epochs"])]


def train_policy(regime: Regime, episodes: Mapping[str, Sequence[EpisodeRecord]],
                 cfg: Optional[ExperimentConfig] = None, seed: Optional[int] = None) -> PolicyParams:
    """Behavior-clone a policy for one task under a data-mixture regime.

    Each training sample is drawn from the regime's mixture (see :func:`compsim.dataset.build_mixture`), then a window
    position inside the drawn episode is picked; the loss is the mean squared error between the predicted and the
    demonstrated action chunk features. Pretrain-finetune regimes run a synthetic-only phase followed by a real-only
    phase.

    Args:
        regime (Regime): Regime.
        episodes (Mapping[str, Sequence[EpisodeRecord]]): Available episodes of one task per source.
        cfg (ExperimentConfig, optional): Experiment configuration (policy section).
        seed (int, optional): Training seed (the global seed by default).

    Returns:
        PolicyParams: Trained parameters.

    Raises:
        PolicyError: When a source holds too few episodes or they span several tasks.
        TrainingError: When the loss diverges.

    """
    cfg = resolve_config(cfg)
    seed = cfg.seed if seed is None else int(seed)
    selected = select_episodes(regime, episodes, seed)
    labels = sorted({e.task.label for records in selected.values() for e in records})
    if len(labels) > 1:
        raise PolicyError(f"Policy episodes span several tasks: {labels}.")

    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        torch.manual_seed(derive_seed("policy-init", regime.name, seed))
        params = PolicyParams.from_config(cfg, regime=regime, task=labels[0] if labels else None,
                                          episodes={s: [e.episode_id for e in r] for s, r in selected.items()})
        _fit(params, regime, selected, cfg, seed)
    finally:
        torch.set_num_threads(threads)
    logger.info(f"Trained {regime.name} policy for {params.task} on "
                f"{ {s: len(r) for s, r in selected.items()} } episodes; final loss {params.losses[-1]:.5f}.")
    return params


def _fit(params: PolicyParams, regime: Regime, selected: Dict[str, List[EpisodeRecord]], cfg: ExperimentConfig,
         seed: int) -> None:
    policy, settings = cfg.policy, params.settings
    arrays: Dict[Tuple[str, str], _EpisodeArrays] = {}
    for source, records in selected.items():
        for record in records:
            if record.num_steps == 0:
                raise PolicyError(f"Episode {record.episode_id} has no actions.")
            arrays[(record.channel, record.episode_id)] = _EpisodeArrays(
                downsample_frames(record.frames, settings["downsample"]),
                np.stack([a.features(settings["max_step"]) for a in record.actions]))

    network = params.network
    optimizer = torch.optim.AdamW(network.parameters(), lr=policy["lr"], weight_decay=policy["weight_decay"])
    rng = np.random.default_rng(derive_seed("policy-windows", regime.name, seed))
    for phase, mixture, epochs in _phases(regime, selected, cfg, seed):
        if epochs == 0:
            continue
        draws = build_mixture(mixture, epochs * policy["steps_per_epoch"] * policy["batch_size"])
        batch_size = policy["batch_size"]
        for epoch in range(epochs):
            network.train()
            total = 0.0
            for step_index in range(policy["steps_per_epoch"]):
                start = (epoch * policy["steps_per_epoch"] + step_index) * batch_size
                observations, targets = [], []
                for channel, episode_id in draws[start:start + batch_size]:
                    episode = arrays[(channel, episode_id)]
                    k = int(rng.integers(len(episode.features)))
                    observations.append(episode.observations[observation_indices(k, settings["obs_steps"])])
                    targets.append(chunk_targets(episode.features, k, settings["pred_horizon"], settings["max_step"]))
                prediction = network(_observation_tensor(np.stack(observations)))
                loss = F.mse_loss(prediction, torch.from_numpy(np.stack(targets).astype(np.float32)))
                if not torch.isfinite(loss):
                    logger.error(f"Policy loss diverged in {phase} epoch {epoch + 1} of {regime.name}.")
                    raise TrainingError(f"Policy loss diverged in {phase} epoch {epoch + 1}.",
                                        payload={"regime": regime.name, "phase": phase})
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                total += float(loss.detach())
            params.losses.append(total / policy["steps_per_epoch"])
            logger.debug(f"{regime.name} {phase} epoch {epoch + 1}/{epochs}: loss {params.losses[-1]:.5f}")


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# POLICIES AND ROLLOUTS # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

class Policy(object):
    """Base CompSim policy: maps observed frames and the current state to a chunk of actions.
    """

    def reset(self, task: TaskSpec, seed: int, cfg: ExperimentConfig) -> None:
        """Prepare for a new trial."""

    def act(self, frames: Sequence[np.ndarray], state: WorldState) -> List[LowLevelAction]:
        raise NotImplementedError


class BCPolicy(Policy):
    """Behavior-cloning policy executing the first action_steps actions of every predicted chunk.
    """

    def __init__(self, params: PolicyParams):
        self.params: PolicyParams = params

    def act(self, frames: Sequence[np.ndarray], state: WorldState) -> List[LowLevelAction]:
        return self.params.predict(frames)[:self.params.settings["action_steps"]]


class ExpertPolicy(Policy):
    """Scripted expert that replays the scheduler's demonstration of the trial.
    """

    def __init__(self, action_steps: int = 6):
        self.action_steps: int = action_steps
        self._actions: List[LowLevelAction] = []
        self._cursor: int = 0

    def reset(self, task: TaskSpec, seed: int, cfg: ExperimentConfig) -> None:
        self._actions = list(schedule_task(task, seed, cfg).actions)
        self._cursor = 0

    def act(self, frames: Sequence[np.ndarray], state: WorldState) -> List[LowLevelAction]:
        chunk = self._actions[self._cursor:self._cursor + self.action_steps]
        self._cursor += len(chunk)
        return chunk


class RandomPolicy(Policy):
    """Uniform random actions (translations within the step limit, uniformly drawn gripper commands).
    """

    def __init__(self, action_steps: int = 6):
        self.action_steps: int = action_steps
        self._rng: np.random.Generator = np.random.default_rng(0)
        self._max_step: float = 0.02

    def reset(self, task: TaskSpec, seed: int, cfg: ExperimentConfig) -> None:
        self._rng = np.random.default_rng(derive_seed("random-policy", task.label, seed))
        self._max_step = cfg.world["max_step"]

    def act(self, frames: Sequence[np.ndarray], state: WorldState) -> List[LowLevelAction]:
        chunk = []
        for _ in range(self.action_steps):
            dx, dy, dz = self._rng.uniform(-self._max_step, self._max_step, size=3)
            command = ("hold", "open", "close")[int(self._rng.integers(3))]
            chunk.append(LowLevelAction({"dx": dx, "dy": dy, "dz": dz, "gripper_cmd": command}))
        return chunk


def as_policy(policy: Union[Policy, PolicyParams, None]) -> Optional[Policy]:
    return BCPolicy(policy) if isinstance(policy, PolicyParams) else policy


def trial_initial_state(task: TaskSpec, seed: int, cfg: Optional[ExperimentConfig] = None) -> WorldState:
    """Initial state of an evaluation trial, shared by every policy evaluated on it.

    Args:
        task (TaskSpec): Task variant.
        seed (int): Trial seed.
        cfg (ExperimentConfig, optional): Experiment configuration.

    Returns:
        WorldState: The initial state the scheduler would demonstrate from.

    """
    cfg = resolve_config(cfg)
    try:
        return schedule_task(task, seed, cfg).states[0]
    except GenerationError:
        logger.warning(f"No demonstration exists for {task.label} trial {seed}; using the first sampled state.")
        return sample_initial_state(task, seed, cfg, 0)


def rollout(policy: Union[Policy, PolicyParams], task: TaskSpec, seed: int, cfg: Optional[ExperimentConfig] = None,
            camera=None, appearance=None) -> Tuple[bool, Trajectory]:
    """Run one closed-loop trial with receding-horizon execution in the real channel.

    Args:
        policy (Policy | PolicyParams): Policy, or trained parameters run as a :class:`BCPolicy`.
        task (TaskSpec): Task variant.
        seed (int): Trial seed.
        cfg (ExperimentConfig, optional): Experiment configuration (policy.step_budget).
        camera (CameraModel, optional): Observation camera (configured camera by default).
        appearance (AppearanceParams, optional): Real-channel appearance (configured appearance by default).

    Returns:
        tuple[bool, Trajectory]: Success flag and the executed trace.

    """
    cfg = resolve_config(cfg)
    policy = as_policy(policy)
    camera = camera or cfg.camera_model()
    appearance = appearance or cfg.appearance_params()
    noise_seed = episode_seed(task, seed)
    budget = cfg.policy["step_budget"]

    def observe(state: WorldState, index: int) -> np.ndarray:
        return to_uint8(render_real(state, camera, appearance, noise_seed, cfg, frame_index=index))

    policy.reset(task, seed, cfg)
    state = trial_initial_state(task, seed, cfg)
    states, actions, frames = [state], [], [observe(state, 0)]
    success = False
    while len(actions) < budget:
        chunk = policy.act(frames, state)
        if not chunk:
            break
        try:
            for action in chunk[:budget - len(actions)]:
                state = step(state, action, cfg)
                actions.append(action)
                states.append(state)
                frames.append(observe(state, len(states) - 1))
        except BoundsError as err:
            logger.debug(f"Trial {task.label} seed {seed} stopped on an out-of-bounds action: {err}")
            break
        if check_success(task, state, states, cfg):
            success = True
            break
    trace = Trajectory({"actions": actions, "states": states, "task": task, "seed": seed})
    return success, trace


def _run_trials(policy: Policy, task: TaskSpec, seeds: Sequence[int], cfg: ExperimentConfig) -> int:
    camera, appearance = cfg.camera_model(), cfg.appearance_params()

    def trial(seed: int) -> bool:
        return rollout(copy.copy(policy), task, seed, cfg, camera, appearance)[0]

    with ThreadPoolExecutor(max_workers=max(1, int(cfg.jobs))) as executor:
        return sum(executor.map(trial, seeds))


def evaluate_regimes(policies: Mapping[str, Mapping[str, Optional[Policy]]], suites: Sequence[EvalSuite],
                     tasks: Sequence[str], cfg: Optional[ExperimentConfig] = None) -> List[Dict[str, Any]]:
    """Evaluate every (task, regime) policy on every suite.

    Args:
        policies (Mapping[str, Mapping[str, Policy | None]]): Policy per regime name and task label.
        suites (Sequence[EvalSuite]): Suites; every regime sees the same trial seeds of a suite.
        tasks (Sequence[str]): Task labels.
        cfg (ExperimentConfig, optional): Experiment configuration.

    Returns:
        list[dict]: Rows with task, suite, regime, successes (an int, or "absent" when the policy is missing), and
        trials. Suites with no trials contribute no rows, and neither do tasks without the suite's object variant.

    """
    cfg = resolve_config(cfg)
    rows = []
    for suite in suites:
        if suite.trials == 0:
            continue
        for label in tasks:
            region = suite.task_for(TaskSpec.from_label(label).name)
            if not supports_object_variant(region.name, region.object_variant):
                logger.info(f"Skipping {suite.kind} for {label}: the task has no bottle or card to swap.")
                continue
            task = TaskSpec.from_label(label, region.init_region, region.object_variant)
            for regime in sorted(policies):
                policy = as_policy(policies[regime].get(label))
                if policy is None:
                    rows.append({"task": label, "suite": suite.kind, "regime": regime, "successes": "absent",
                                 "trials": suite.trials})
                    continue
                successes = _run_trials(policy, task, suite.seeds, cfg)
                logger.info(f"{label} / {suite.kind} / {regime}: {successes}/{suite.trials}")
                rows.append({"task": label, "suite": suite.kind, "regime": regime, "successes": successes,
                             "trials": suite.trials})
    return rows


def build_suites(cfg: Optional[ExperimentConfig] = None, trials: Optional[int] = None,
                 kinds: Optional[Sequence[str]] = None) -> List[EvalSuite]:
    cfg = resolve_config(cfg)
    suites = []
    for kind, settings in cfg.policy["suites"].items():
        if kinds is not None and kind not in kinds:
            continue
        suites.append(EvalSuite({"kind": kind, "trials": settings["trials"] if trials is None else trials,
                                 "base_seed": settings["base_seed"]}))
    return suites


def write_regime_csv(rows: Sequence[Dict[str, Any]], results_file: Union[Path, str]) -> Path:
    results_file = Path(results_file)
    results_file.parent.mkdir(parents=True, exist_ok=True)
    with open(results_file, "w", encoding="utf-8", newline="") as csv_file:
        writer = csv.DictWriter(csv_file, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({column: row[column] for column in RESULT_COLUMNS})
    return results_file


def read_regime_csv(results_file: Union[Path, str]) -> List[Dict[str, str]]:
    with open(results_file, "r", encoding="utf-8", newline="") as csv_file:
        return list(csv.DictReader(csv_file))


def success_rate(rows: Sequence[Dict[str, Any]], regime: str, suite: str) -> float:
    """Aggregate success fraction of a regime over the tasks of a suite (NaN when nothing was evaluated).
    """
    counted = [r for r in rows if r["regime"] == regime and r["suite"] == suite and r["successes"] != "absent"]
    trials = sum(int(r["trials"]) for r in counted)
    return sum(int(r["successes"]) for r in counted) / trials if trials else math.nan
