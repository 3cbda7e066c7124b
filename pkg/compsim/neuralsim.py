# -*- coding: utf-8 -*-
"""CompSim module for the neural simulator: a conditional denoising-diffusion model over frames.

The model predicts the noise added to a real-channel frame given two condition branches:

    visual dynamics
        a window of sim-channel frames centered on the target frame (edge padded)
    control dynamics
        a window of low-level action features around the target frame (padded with hold actions)

Either branch can be replaced by a learned null embedding. Training drops each branch at random so that one network
provides the unconditional, visual-only, control-only, and joint noise predictions that :func:`compose_scores`
combines during sampling.

Frames are exchanged in [0, 1] (float) or as uint8; inside the network they live in [-1, 1], channels first.

Attributes:
    logger (Logger): Module level logger for usage and debugging.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import copy
import math
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from compsim.checkpoint import load_checkpoint, load_module, module_arrays, save_module
from compsim.config import ExperimentConfig, resolve_config
from compsim.dataset import consolidate_index, read_episode, write_episode
from compsim.exceptions import CheckpointError, SamplingError, TrainingError
from compsim.logger import get_logger
from compsim.metrics import psnr, ssim
from compsim.models import (
    CompSimObject, ConditioningBundle, DatasetIndex, EpisodeRecord, GuidanceWeights, LowLevelAction, PairedEpisode,
    TrainReport
)
from compsim.utils import derive_seed, sha256_bytes, to_uint8, to_unit

logger = get_logger(__name__)

ACTION_DIM = 6


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# NOISE SCHEDULE  # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

class NoiseSchedule(CompSimObject):
    """Model class for a linear beta schedule.
    """

    def __init__(self, extracted_data):
        """Instantiate the NoiseSchedule child class of CompSimObject.

        Args:
            extracted_data (dict): Schedule data.

        Attributes:
            T (int): Number of diffusion steps.
            beta_start (float): beta_1.
            beta_end (float): beta_T.

        """
        CompSimObject.__init__(self, extracted_data)
        self.T: int = int(self._extracted_data.get("T", 50))
        self.beta_start: float = float(self._extracted_data.get("beta_start", 1e-4))
        self.beta_end: float = float(self._extracted_data.get("beta_end", 0.02))
        if self.T < 1 or not 0.0 < self.beta_start < 1.0 or not 0.0 < self.beta_end < 1.0:
            raise SamplingError(f"Invalid noise schedule T={self.T}, betas [{self.beta_start}, {self.beta_end}].")
        if self.T > 1 and not self.beta_start < self.beta_end:
            raise SamplingError("Noise schedule betas must be strictly increasing.")
        self._betas = np.linspace(self.beta_start, self.beta_end, self.T, dtype=np.float64)
        # index 0 is the clean frame
        self._alpha_bars = np.concatenate([[1.0], np.cumprod(1.0 - self._betas)])

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "NoiseSchedule":
        ns = cfg.neuralsim
        return cls({"T": ns["T"], "beta_start": ns["beta_start"], "beta_end": ns["beta_end"]})

    @property
    def betas(self) -> np.ndarray:
        return self._betas.copy()

    @property
    def alpha_bars(self) -> np.ndarray:
        """Cumulative products alpha_bar_0 .. alpha_bar_T (alpha_bar_0 = 1).
        """
        return self._alpha_bars.copy()

    def alpha_bar(self, t: int) -> float:
        self.check_step(t)
        return float(self._alpha_bars[int(t)])

    def alpha_bar_tensor(self, t: torch.Tensor, dtype: torch.dtype) -> torch.Tensor:
        return torch.as_tensor(self._alpha_bars, dtype=torch.float64)[t].to(dtype)

    def check_step(self, t: Any) -> None:
        if isinstance(t, bool) or int(t) != t or not 0 <= int(t) <= self.T:
            raise SamplingError(f"Diffusion step t={t} is outside [0, {self.T}].")

    def sampling_steps(self, steps: Optional[int] = None) -> List[int]:
        """Descending diffusion steps visited by the reverse process.

        Args:
            steps (int, optional): Number of visited steps (all T steps by default).

        Returns:
            list[int]: Steps from T down to 1.

        """
        steps = self.T if steps is None else max(1, min(int(steps), self.T))
        visited = np.unique(np.round(np.linspace(self.T, 1, steps)).astype(int))
        return [int(t) for t in visited[::-1]]


def forward_diffuse(x0: Union[np.ndarray, torch.Tensor], t: int, eps: Union[np.ndarray, torch.Tensor],
                    schedule: NoiseSchedule) -> Union[np.ndarray, torch.Tensor]:
    """Noise a clean frame to diffusion step t: sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps.

    Args:
        x0 (np.ndarray | torch.Tensor): Clean frame.
        t (int): Diffusion step in [0, T].
        eps (np.ndarray | torch.Tensor): Noise of the same shape.
        schedule (NoiseSchedule): Schedule.

    Returns:
        np.ndarray | torch.Tensor: Noisy frame (x0 itself when t = 0).

    Raises:
        SamplingError: When t is out of range or the shapes differ.

    """
    schedule.check_step(t)
    if tuple(x0.shape) != tuple(eps.shape):
        raise SamplingError(f"Noise shape {tuple(eps.shape)} does not match frame shape {tuple(x0.shape)}.")
    if int(t) == 0:
        return x0 * 1.0
    alpha_bar = schedule.alpha_bar(t)
    return math.sqrt(alpha_bar) * x0 + math.sqrt(1.0 - alpha_bar) * eps


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# CONDITIONING  # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def visual_window_indices(k: int, num_frames: int, window: int) -> List[int]:
    start = k - window // 2
    return [min(max(start + i, 0), num_frames - 1) for i in range(window)]


def action_window_indices(k: int, window: int) -> List[int]:
    start = k - window // 2
    return [start + i for i in range(window)]


def action_features(actions: Sequence[LowLevelAction], max_step: float) -> np.ndarray:
    if not actions:
        return np.zeros((0, ACTION_DIM), dtype=np.float32)
    return np.stack([action.features(max_step) for action in actions])


def _control_window(features: np.ndarray, k: int, window: int, max_step: float) -> np.ndarray:
    hold = LowLevelAction.hold().features(max_step)
    return np.stack([features[j] if 0 <= j < len(features) else hold for j in action_window_indices(k, window)])


def make_bundle(sim_frames: np.ndarray, actions: Sequence[LowLevelAction], k: int,
                cfg: Optional[ExperimentConfig] = None, drop_visual: bool = False,
                drop_control: bool = False) -> ConditioningBundle:
    """Condition branches of frame k of an episode.

    Args:
        sim_frames (np.ndarray): Sim-channel frames (N + 1, H, W, 3).
        actions (Sequence[LowLevelAction]): The N actions of the episode.
        k (int): Target frame index.
        cfg (ExperimentConfig, optional): Experiment configuration (window lengths and max_step).
        drop_visual (bool): Replace the visual branch with its null embedding.
        drop_control (bool): Replace the control branch with its null embedding.

    Returns:
        ConditioningBundle: Bundle with a (W_v, H, W, 3) sim window and a (W_a, 6) action window.

    """
    cfg = resolve_config(cfg)
    max_step = cfg.world["max_step"]
    frames = to_unit(np.asarray(sim_frames))
    visual = frames[visual_window_indices(k, len(frames), cfg.neuralsim["window_visual"])]
    control = _control_window(action_features(actions, max_step), k, cfg.neuralsim["window_action"], max_step)
    return ConditioningBundle({"visual": visual.astype(np.float32), "control": control.astype(np.float32),
                               "drop_visual": drop_visual, "drop_control": drop_control})


def frames_to_tensor(frames: np.ndarray) -> torch.Tensor:
    """(N, H, W, 3) frames in [0, 1] or uint8 to a float32 (N, 3, H, W) tensor in [-1, 1].
    """
    unit = to_unit(np.asarray(frames)).astype(np.float32)
    return torch.from_numpy(np.ascontiguousarray(unit.transpose(0, 3, 1, 2))) * 2.0 - 1.0


def tensor_to_frames(tensor: torch.Tensor) -> np.ndarray:
    unit = ((tensor.detach().to(torch.float64) + 1.0) / 2.0).clamp(0.0, 1.0)
    return unit.permute(0, 2, 3, 1).cpu().numpy()


class DenoiseBatch(NamedTuple):
    """Training batch: real target frames with the condition windows of each frame.
    """
    target: torch.Tensor
    visual: torch.Tensor
    control: torch.Tensor


def _visual_tensor(visual: np.ndarray) -> torch.Tensor:
    # (B, W_v, H, W, 3) -> (B, W_v * 3, H, W)
    batch, window, height, width, _ = visual.shape
    stacked = frames_to_tensor(visual.reshape(batch * window, height, width, 3))
    return stacked.reshape(batch, window * 3, height, width)


def collate(targets: Sequence[np.ndarray], bundles: Sequence[ConditioningBundle]) -> DenoiseBatch:
    """Stack target frames and their bundles into a network batch.

    Args:
        targets (Sequence[np.ndarray]): Real-channel target frames (H, W, 3).
        bundles (Sequence[ConditioningBundle]): One bundle per target.

    Returns:
        DenoiseBatch: Tensors in network layout.

    """
    if len(targets) != len(bundles) or not bundles:
        raise TrainingError(f"Cannot collate {len(targets)} targets with {len(bundles)} bundles.")
    return DenoiseBatch(
        target=frames_to_tensor(np.stack(targets)),
        visual=_visual_tensor(np.stack([b.visual for b in bundles])),
        control=torch.from_numpy(np.stack([b.control.reshape(-1) for b in bundles]).astype(np.float32))
    )


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# SCORE NETWORK # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def _groups(channels: int) -> int:
    return math.gcd(8, channels)


def step_embedding(t: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    frequencies = torch.exp(-math.log(10000.0) * torch.arange(half, dtype=torch.float32) / max(half, 1))
    arguments = t.to(torch.float32)[:, None] * frequencies[None, :]
    embedding = torch.cat([torch.sin(arguments), torch.cos(arguments)], dim=1)
    if dim % 2:
        embedding = F.pad(embedding, (0, 1))
    return embedding


class FiLMBlock(nn.Module):
    """Residual convolution block modulated feature-wise by the step and control embedding.
    """

    def __init__(self, channels: int, cond_dim: int):
        super().__init__()
        self.norm1 = nn.GroupNorm(_groups(channels), channels)
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = nn.GroupNorm(_groups(channels), channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.film = nn.Linear(cond_dim, 2 * channels)

    def forward(self, h: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        scale, shift = self.film(cond).chunk(2, dim=1)
        x = self.conv1(F.silu(self.norm1(h)))
        x = self.norm2(x) * (1.0 + scale[:, :, None, None]) + shift[:, :, None, None]
        x = self.conv2(F.silu(x))
        return h + x


class ScoreNetwork(nn.Module):
    """Two-level convolutional encoder-decoder predicting the noise of a frame.

    The visual window is concatenated channel-wise with the noisy frame; the control window is embedded and added to the
    sinusoidal step embedding, which modulates every block.
    """

    def __init__(self, window_visual: int = 3, window_action: int = 4, base_channels: int = 32):
        super().__init__()
        c, e = base_channels, 4 * base_channels
        self.window_visual = window_visual
        self.window_action = window_action
        self.base_channels = base_channels

        self.visual_null = nn.Parameter(torch.zeros(3 * window_visual, 1, 1))
        self.control_null = nn.Parameter(torch.zeros(e))
        self.time_mlp = nn.Sequential(nn.Linear(c, e), nn.SiLU(), nn.Linear(e, e))
        self.control_mlp = nn.Sequential(nn.Linear(window_action * ACTION_DIM, e), nn.SiLU(), nn.Linear(e, e))

        self.conv_in = nn.Conv2d(3 + 3 * window_visual, c, 3, padding=1)
        self.enc1 = FiLMBlock(c, e)
        self.down1 = nn.Conv2d(c, 2 * c, 3, stride=2, padding=1)
        self.enc2 = FiLMBlock(2 * c, e)
        self.down2 = nn.Conv2d(2 * c, 2 * c, 3, stride=2, padding=1)
        self.mid = FiLMBlock(2 * c, e)
        self.up2 = nn.Conv2d(4 * c, 2 * c, 3, padding=1)
        self.dec2 = FiLMBlock(2 * c, e)
        self.up1 = nn.Conv2d(3 * c, c, 3, padding=1)
        self.dec1 = FiLMBlock(c, e)
        self.norm_out = nn.GroupNorm(_groups(c), c)
        self.conv_out = nn.Conv2d(c, 3, 3, padding=1)

    def forward(self, x: torch.Tensor, t: torch.Tensor, visual: torch.Tensor, control: torch.Tensor,
                drop_visual: torch.Tensor, drop_control: torch.Tensor) -> torch.Tensor:
        visual = torch.where(drop_visual[:, None, None, None], self.visual_null.expand_as(visual), visual)
        control_embedding = torch.where(drop_control[:, None], self.control_null.expand(x.shape[0], -1),
                                        self.control_mlp(control))
        cond = self.time_mlp(step_embedding(t, self.base_channels)) + control_embedding

        h1 = self.enc1(self.conv_in(torch.cat([x, visual], dim=1)), cond)
        h2 = self.enc2(self.down1(h1), cond)
        h = self.mid(self.down2(h2), cond)
        h = F.interpolate(h, size=h2.shape[-2:], mode="nearest")
        h = self.dec2(self.up2(torch.cat([h, h2], dim=1)), cond)
        h = F.interpolate(h, size=h1.shape[-2:], mode="nearest")
        h = self.dec1(self.up1(torch.cat([h, h1], dim=1)), cond)
        return self.conv_out(F.silu(self.norm_out(h)))


class NeuralSimParams(object):
    """CompSim NeuralSimParams object bundling a score network with its schedule and settings.
    """

    def __init__(self, network: nn.Module, schedule: NoiseSchedule, settings: Dict[str, Any],
                 report: Optional[TrainReport] = None):
        """Instantiate trained (or freshly initialized) neural simulator parameters.

        Args:
            network (nn.Module): Score network.
            schedule (NoiseSchedule): Noise schedule the network was trained with.
            settings (dict): Architecture, resolution, max_step, sampling steps, and the training configuration echo.
            report (TrainReport, optional): Training summary.

        """
        self.network: nn.Module = network
        self.schedule: NoiseSchedule = schedule
        self.settings: Dict[str, Any] = dict(settings)
        self.report: Optional[TrainReport] = report

    @classmethod
    def from_config(cls, cfg: Optional[ExperimentConfig] = None) -> "NeuralSimParams":
        cfg = resolve_config(cfg)
        ns = cfg.neuralsim
        settings = {
            "window_visual": ns["window_visual"], "window_action": ns["window_action"],
            "base_channels": ns["base_channels"], "width": cfg.render["width"], "height": cfg.render["height"],
            "max_step": cfg.world["max_step"], "sampling_steps": ns["sampling_steps"],
            "sample_batch": ns["sample_batch"], "training": dict(ns)
        }
        network = ScoreNetwork(ns["window_visual"], ns["window_action"], ns["base_channels"])
        return cls(network, NoiseSchedule.from_config(cfg), settings)

    @property
    def fingerprint(self) -> str:
        digest = b"".join(array.tobytes() for array in module_arrays(self.network).values())
        return sha256_bytes(digest)

    def check_finite(self) -> None:
        for name, tensor in self.network.state_dict().items():
            if not torch.all(torch.isfinite(tensor)):
                raise SamplingError(f"Neural simulator parameter {name} holds non-finite values.")

    def save(self, directory: Union[Path, str]) -> Path:
        header = {"kind": "neuralsim", "schedule": self.schedule.serialized(), "architecture": self.settings}
        if self.report is not None:
            header["report"] = self.report
        return save_module(directory, self.network, header)

    @classmethod
    def load(cls, directory: Union[Path, str]) -> "NeuralSimParams":
        """Load parameters saved by :meth:`save`.

        Args:
            directory (Path | str): Checkpoint directory.

        Returns:
            NeuralSimParams: Loaded parameters.

        Raises:
            CheckpointError: When the checkpoint is missing, not a neural simulator, or does not match its architecture.

        """
        header, _ = load_checkpoint(directory)
        if header.get("kind") != "neuralsim":
            raise CheckpointError(f"Checkpoint in {directory} is not a neural simulator.", path=str(directory))
        settings = header["architecture"]
        network = ScoreNetwork(settings["window_visual"], settings["window_action"], settings["base_channels"])
        load_module(directory, network)
        report = header.get("report")
        return cls(network, NoiseSchedule(header["schedule"]), settings,
                   report if isinstance(report, TrainReport) else None)


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# TRAINING  # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def dropout_masks(batch_size: int, p_drop: float, p_drop_both: float,
                  generator: Optional[torch.Generator] = None) -> Tuple[torch.Tensor, torch.Tensor]:
    """Independent per-branch condition dropout plus a forced both-dropped share.

    Args:
        batch_size (int): Batch size.
        p_drop (float): Probability of dropping each branch.
        p_drop_both (float): Probability of dropping both branches together.
        generator (torch.Generator, optional): Random stream.

    Returns:
        tuple[torch.Tensor, torch.Tensor]: Boolean (drop_visual, drop_control) masks.

    """
    draws = torch.rand((batch_size, 3), generator=generator)
    both = draws[:, 0] < p_drop_both
    return both | (draws[:, 1] < p_drop), both | (draws[:, 2] < p_drop)


def denoise_loss(network: nn.Module, batch: DenoiseBatch, schedule: NoiseSchedule,
                 generator: Optional[torch.Generator] = None, t: Optional[torch.Tensor] = None,
                 noise: Optional[torch.Tensor] = None, p_drop: float = 0.0, p_drop_both: float = 0.0,
                 pixel_loss_weight: float = 0.0) -> torch.Tensor:
    """Noise-prediction mean squared error on real target frames.

    Args:
        network (nn.Module): Noise predictor with the :class:`ScoreNetwork` call signature.
        batch (DenoiseBatch): Targets and condition windows.
        schedule (NoiseSchedule): Noise schedule.
        generator (torch.Generator, optional): Random stream for steps, noise, and condition dropout.
        t (torch.Tensor, optional): Diffusion steps in [1, T] per sample (drawn uniformly when omitted).
        noise (torch.Tensor, optional): Noise per sample (unit normal draws when omitted).
        p_drop (float): Per-branch condition dropout probability.
        p_drop_both (float): Forced both-dropped probability.
        pixel_loss_weight (float): Weight of the auxiliary clean-frame reconstruction loss.

    Returns:
        torch.Tensor: Scalar loss (mean over every element of the batch).

    Raises:
        TrainingError: On an empty batch or a non-finite loss.

    """
    target = batch.target
    batch_size = target.shape[0]
    if batch_size == 0:
        raise TrainingError("Denoising loss needs a non-empty batch.")
    if t is None:
        t = torch.randint(1, schedule.T + 1, (batch_size,), generator=generator)
    if noise is None:
        noise = torch.randn(target.shape, generator=generator, dtype=target.dtype)
    drop_visual, drop_control = dropout_masks(batch_size, p_drop, p_drop_both, generator)

    alpha_bar = schedule.alpha_bar_tensor(t, target.dtype).view(-1, 1, 1, 1)
    x_t = alpha_bar.sqrt() * target + (1.0 - alpha_bar).sqrt() * noise
    predicted = network(x_t, t, batch.visual, batch.control, drop_visual, drop_control)
    loss = F.mse_loss(predicted, noise)
    if pixel_loss_weight > 0:
        x0_predicted = (x_t - (1.0 - alpha_bar).sqrt() * predicted) / alpha_bar.sqrt()
        loss = loss + pixel_loss_weight * F.mse_loss(x0_predicted, target)

    if not torch.isfinite(loss):
        diagnostic = {"batch_size": batch_size, "t": t.tolist(), "target_min": float(target.min()),
                      "target_max": float(target.max()), "prediction_finite": bool(torch.isfinite(predicted).all())}
        logger.error(f"Non-finite denoising loss: {diagnostic}")
        raise TrainingError("Denoising loss is not finite.", payload=diagnostic)
    return loss


def loss_and_gradients(network: nn.Module, batch: DenoiseBatch, schedule: NoiseSchedule,
                       **loss_kwargs) -> Tuple[float, List[torch.Tensor]]:
    """Evaluate :func:`denoise_loss` and its exact gradients with respect to every trainable parameter.

    Args:
        network (nn.Module): Noise predictor.
        batch (DenoiseBatch): Batch.
        schedule (NoiseSchedule): Noise schedule.
        **loss_kwargs: Forwarded to :func:`denoise_loss`.

    Returns:
        tuple[float, list[torch.Tensor]]: Loss value and one gradient per parameter (zeros for unused ones).

    """
    parameters = [p for p in network.parameters() if p.requires_grad]
    loss = denoise_loss(network, batch, schedule, **loss_kwargs)
    gradients = torch.autograd.grad(loss, parameters, allow_unused=True)
    return float(loss.detach()), [g if g is not None else torch.zeros_like(p) for g, p in zip(gradients, parameters)]


class _PairArrays(NamedTuple):
    pair_key: str
    real: np.ndarray
    sim: np.ndarray
    features: np.ndarray


def _examples(pair: _PairArrays, indices: Sequence[int], cfg: ExperimentConfig) -> Tuple[List, List]:
    window_visual, window_action = cfg.neuralsim["window_visual"], cfg.neuralsim["window_action"]
    max_step = cfg.world["max_step"]
    targets, bundles = [], []
    for k in indices:
        visual = pair.sim[visual_window_indices(k, len(pair.sim), window_visual)]
        control = _control_window(pair.features, k, window_action, max_step)
        targets.append(pair.real[k])
        bundles.append(ConditioningBundle({"visual": visual, "control": control}))
    return targets, bundles


def _choose(rng: np.random.Generator, population: int, count: int) -> List[int]:
    return sorted(int(i) for i in rng.choice(population, size=count, replace=count > population))


def _split(pairs: List[PairedEpisode], rng: np.random.Generator, val_fraction: float
           ) -> Tuple[List[PairedEpisode], List[PairedEpisode]]:
    if len(pairs) == 1:
        return pairs, pairs
    n_val = min(max(1, int(round(len(pairs) * val_fraction))), len(pairs) - 1)
    order = rng.permutation(len(pairs))
    val = sorted((pairs[i] for i in order[:n_val]), key=lambda p: p.pair_key)
    train_pairs = sorted((pairs[i] for i in order[n_val:]), key=lambda p: p.pair_key)
    return train_pairs, val


def validation_weights(cfg: ExperimentConfig) -> GuidanceWeights:
    variants = cfg.neuralsim["variants"]
    if "full" in variants:
        return cfg.guidance("full")
    return cfg.guidance(max(variants, key=lambda name: sum(variants[name])))


def last_finite_dir(model_dir: Union[Path, str]) -> Path:
    """Sibling directory receiving the last finite parameters of a diverged run that was to be saved in model_dir.
    """
    model_dir = Path(model_dir)
    return model_dir.parent / f"{model_dir.name}_last_finite"


def train(pairs: Sequence[PairedEpisode], cfg: Optional[ExperimentConfig] = None, seed: Optional[int] = None,
          checkpoint_dir: Optional[Union[Path, str]] = None) -> Tuple[NeuralSimParams, TrainReport]:
    """Train the neural simulator on paired sim/real episodes.

    Training runs on one torch thread and is bit-reproducible given the seed. After every epoch the held-out pairs are
    sampled with the full guidance weights; the parameters of the epoch with the best validation PSNR are returned.

    Args:
        pairs (Sequence[PairedEpisode]): Training pairs.
        cfg (ExperimentConfig, optional): Experiment configuration (neuralsim section).
        seed (int, optional): Training seed (the global seed by default).
        checkpoint_dir (Path | str, optional): Where the last finite parameters are saved when the loss diverges.

    Returns:
        tuple[NeuralSimParams, TrainReport]: Best-validation parameters and the training summary.

    Raises:
        TrainingError: When no pairs are given or the loss diverges. The exception carries the last finite parameters
            and, when checkpoint_dir is given, their saved location as its path.

    """
    cfg = resolve_config(cfg)
    ns = cfg.neuralsim
    seed = cfg.seed if seed is None else int(seed)
    if not pairs:
        raise TrainingError("Neural simulator training needs at least one paired episode.")
    for pair in pairs:
        pair.validate()

    threads = torch.get_num_threads()
    torch.set_num_threads(1)
    try:
        return _train(sorted(pairs, key=lambda p: p.pair_key), cfg, ns, seed, checkpoint_dir)
    finally:
        torch.set_num_threads(threads)


def _train(pairs: List[PairedEpisode], cfg: ExperimentConfig, ns: Dict[str, Any], seed: int,
           checkpoint_dir: Optional[Union[Path, str]]) -> Tuple[NeuralSimParams, TrainReport]:
    started = time.perf_counter()
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed)
    rng = np.random.default_rng(derive_seed("neuralsim-train", seed))
    train_pairs, val_pairs = _split(pairs, rng, ns["val_fraction"])

    def arrays(pair: PairedEpisode) -> _PairArrays:
        return _PairArrays(pair.pair_key, to_unit(pair.real.frames).astype(np.float32),
                           to_unit(pair.sim.frames).astype(np.float32),
                           action_features(pair.actions, cfg.world["max_step"]))

    train_arrays = [arrays(p) for p in train_pairs]
    val_arrays = [arrays(p) for p in val_pairs]
    val_targets, val_bundles, val_seeds = [], [], []
    for pair in val_arrays:
        indices = _choose(rng, len(pair.real), min(ns["val_frames_per_pair"], len(pair.real)))
        targets, bundles = _examples(pair, indices, cfg)
        val_targets.extend(targets)
        val_bundles.extend(bundles)
        val_seeds.extend(derive_seed("neuralsim-val", seed, pair.pair_key, k) for k in indices)

    params = NeuralSimParams.from_config(cfg)
    network = params.network
    optimizer = torch.optim.AdamW(network.parameters(), lr=ns["lr"], weight_decay=ns["weight_decay"])
    examples_per_epoch = len(train_arrays) * ns["frames_per_pair"]
    steps_per_epoch = math.ceil(examples_per_epoch / ns["batch_size"])
    warmup = max(1, math.ceil(ns["warmup_ratio"] * steps_per_epoch * ns["epochs"]))
    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lambda step: min(1.0, (step + 1) / warmup))
    weights = validation_weights(cfg)

    epoch_losses: List[float] = []
    val_psnr: List[float] = []
    val_ssim: List[float] = []
    best_state, best_epoch = copy.deepcopy(network.state_dict()), 0
    last_finite = copy.deepcopy(network.state_dict())

    def diverged(message: str, payload: Any = None) -> TrainingError:
        network.load_state_dict(last_finite)
        saved = None
        if checkpoint_dir is not None:
            saved = str(params.save(checkpoint_dir))
        logger.error(f"{message} Last finite parameters " + (f"saved to {saved}." if saved else "kept in memory."))
        return TrainingError(message, payload=payload, path=saved, checkpoint=last_finite)

    for epoch in range(1, ns["epochs"] + 1):
        network.train()
        examples = []
        for pair_index, pair in enumerate(train_arrays):
            examples.extend((pair_index, k) for k in _choose(rng, len(pair.real), ns["frames_per_pair"]))
        order = rng.permutation(len(examples))
        total, count = 0.0, 0
        for start in range(0, len(order), ns["batch_size"]):
            targets, bundles = [], []
            for position in order[start:start + ns["batch_size"]]:
                pair_index, k = examples[position]
                target, bundle = _examples(train_arrays[pair_index], [k], cfg)
                targets.extend(target)
                bundles.extend(bundle)
            batch = collate(targets, bundles)
            try:
                loss = denoise_loss(network, batch, params.schedule, generator, p_drop=ns["p_drop"],
                                    p_drop_both=ns["p_drop_both"], pixel_loss_weight=ns["pixel_loss_weight"])
            except TrainingError as err:
                raise diverged(f"Training diverged in epoch {epoch}: {err.message}", err.payload)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            scheduler.step()
            if not all(torch.isfinite(p).all() for p in network.parameters()):
                raise diverged(f"Neural simulator parameters became non-finite in epoch {epoch}.")
            total += float(loss.detach()) * len(targets)
            count += len(targets)
        epoch_losses.append(total / max(count, 1))
        last_finite = copy.deepcopy(network.state_dict())

        network.eval()
        sampled = sample_frames(params, val_bundles, weights, val_seeds)
        val_psnr.append(float(np.mean([psnr(s, t) for s, t in zip(sampled, val_targets)])))
        val_ssim.append(float(np.mean([ssim(s, t) for s, t in zip(sampled, val_targets)])))
        if best_epoch == 0 or val_psnr[-1] > val_psnr[best_epoch - 1]:
            best_state, best_epoch = copy.deepcopy(network.state_dict()), epoch
        logger.info(f"Neural simulator epoch {epoch}/{ns['epochs']}: loss {epoch_losses[-1]:.5f}, "
                    f"val PSNR {val_psnr[-1]:.3f} dB, val SSIM {val_ssim[-1]:.4f}")

    network.load_state_dict(best_state)
    network.eval()
    report = TrainReport({
        "epoch_losses": epoch_losses, "val_psnr": val_psnr, "val_ssim": val_ssim, "best_epoch": best_epoch,
        "wall_time": time.perf_counter() - started, "seed": seed,
        "train_pairs": [p.pair_key for p in train_arrays], "val_pairs": [p.pair_key for p in val_arrays]
    })
    params.report = report
    return params, report


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# SAMPLING  # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def _check_shape(reference: Any, other: Any, name: str) -> None:
    if tuple(other.shape) != tuple(reference.shape):
        raise SamplingError(f"{name} has shape {tuple(other.shape)}, expected {tuple(reference.shape)}.")


def compose_scores(eps_u: Any, eps_v: Any, eps_a: Any, eps_joint: Any, weights: GuidanceWeights) -> Any:
    """Compose branch noise predictions with dynamic guidance weights.

    Additive mode: eps_u + w_v (eps_v - eps_u) + w_a (eps_a - eps_u). Joint mode: eps_u + g (eps_joint - eps_u) with
    g = max(w_v, w_a). The degenerate weights return the matching input unchanged. A branch whose weight is zero may be
    passed as None.

    Args:
        eps_u (np.ndarray | torch.Tensor): Unconditional prediction.
        eps_v (np.ndarray | torch.Tensor | None): Visual-only prediction.
        eps_a (np.ndarray | torch.Tensor | None): Control-only prediction.
        eps_joint (np.ndarray | torch.Tensor | None): Jointly conditioned prediction (joint mode only).
        weights (GuidanceWeights): Guidance weights.

    Returns:
        np.ndarray | torch.Tensor: Composed noise prediction.

    Raises:
        SamplingError: On negative or non-finite weights, shape mismatches, or a missing required branch.

    """
    weights.validate()
    w_v, w_a = weights.w_v, weights.w_a
    if weights.joint_mode:
        if eps_joint is None:
            raise SamplingError("Joint guidance mode requires the jointly conditioned prediction.")
        _check_shape(eps_u, eps_joint, "eps_joint")
        gain = max(w_v, w_a)
        if gain == 0.0:
            return eps_u
        if gain == 1.0:
            return eps_joint
        return eps_u + gain * (eps_joint - eps_u)

    if eps_joint is not None:
        raise SamplingError("A jointly conditioned prediction is only used in joint guidance mode.")
    for name, branch, weight in (("eps_v", eps_v, w_v), ("eps_a", eps_a, w_a)):
        if weight != 0.0 and branch is None:
            raise SamplingError(f"{name} is required when its guidance weight is non-zero.")
        if branch is not None:
            _check_shape(eps_u, branch, name)
    if w_v == 0.0 and w_a == 0.0:
        return eps_u
    if w_v == 1.0 and w_a == 0.0:
        return eps_v
    if w_a == 1.0 and w_v == 0.0:
        return eps_a
    composed = eps_u
    if w_v != 0.0:
        composed = composed + w_v * (eps_v - eps_u)
    if w_a != 0.0:
        composed = composed + w_a * (eps_a - eps_u)
    return composed


def _branches(weights: GuidanceWeights) -> List[Tuple[str, bool, bool]]:
    # (name, drop_visual, drop_control)
    branches = [("u", True, True)]
    if weights.is_unconditional:
        return branches
    if weights.joint_mode:
        branches.append(("joint", False, False))
    else:
        if weights.w_v != 0.0:
            branches.append(("v", False, True))
        if weights.w_a != 0.0:
            branches.append(("a", True, False))
    return branches


def _initial_noise(seeds: Sequence[int], height: int, width: int) -> torch.Tensor:
    return torch.stack([
        torch.randn((3, height, width), generator=torch.Generator().manual_seed(int(seed))) for seed in seeds
    ])


@torch.no_grad()
def _sample_chunk(params: NeuralSimParams, bundles: Sequence[ConditioningBundle], weights: GuidanceWeights,
                  seeds: Sequence[int], steps: Optional[int]) -> np.ndarray:
    network, schedule = params.network, params.schedule
    network.eval()
    height, width = params.settings["height"], params.settings["width"]
    x = _initial_noise(seeds, height, width)
    batch_size = x.shape[0]
    visual = _visual_tensor(np.stack([b.visual for b in bundles]))
    control = torch.from_numpy(np.stack([b.control.reshape(-1) for b in bundles]).astype(np.float32))
    forced_visual = torch.tensor([b.drop_visual for b in bundles])
    forced_control = torch.tensor([b.drop_control for b in bundles])
    branches = _branches(weights)

    drop_visual = torch.cat([torch.logical_or(forced_visual, torch.tensor(drop_v)) for _, drop_v, _ in branches])
    drop_control = torch.cat([torch.logical_or(forced_control, torch.tensor(drop_c)) for _, _, drop_c in branches])
    visual_all = visual.repeat(len(branches), 1, 1, 1)
    control_all = control.repeat(len(branches), 1)

    timesteps = schedule.sampling_steps(steps)
    for index, t in enumerate(timesteps):
        t_next = timesteps[index + 1] if index + 1 < len(timesteps) else 0
        t_batch = torch.full((batch_size * len(branches),), t, dtype=torch.long)
        predictions = network(x.repeat(len(branches), 1, 1, 1), t_batch, visual_all, control_all, drop_visual,
                              drop_control).split(batch_size)
        eps = dict(zip((name for name, _, _ in branches), predictions))
        guided = compose_scores(eps["u"], eps.get("v"), eps.get("a"), eps.get("joint"), weights)

        alpha_bar, alpha_bar_next = schedule.alpha_bar(t), schedule.alpha_bar(t_next)
        x0 = ((x - math.sqrt(1.0 - alpha_bar) * guided) / math.sqrt(alpha_bar)).clamp(-1.0, 1.0)
        guided = (x - math.sqrt(alpha_bar) * x0) / math.sqrt(1.0 - alpha_bar)
        x = math.sqrt(alpha_bar_next) * x0 + math.sqrt(1.0 - alpha_bar_next) * guided
    return tensor_to_frames(x)


def sample_frames(params: NeuralSimParams, bundles: Sequence[ConditioningBundle], weights: GuidanceWeights,
                  seeds: Sequence[int], steps: Optional[int] = None) -> np.ndarray:
    """Sample one frame per bundle with the deterministic (eta = 0) reverse process.

    Args:
        params (NeuralSimParams): Neural simulator parameters.
        bundles (Sequence[ConditioningBundle]): Condition windows.
        weights (GuidanceWeights): Guidance weights.
        seeds (Sequence[int]): Initial noise seed per frame.
        steps (int, optional): Visited diffusion steps (the configured sampling_steps by default).

    Returns:
        np.ndarray: float64 frames (N, H, W, 3) in [0, 1].

    Raises:
        SamplingError: On invalid weights, mismatched inputs, or non-finite parameters.

    """
    weights.validate()
    params.check_finite()
    if len(bundles) != len(seeds):
        raise SamplingError(f"Got {len(bundles)} bundles but {len(seeds)} seeds.")
    height, width = params.settings["height"], params.settings["width"]
    if not bundles:
        return np.zeros((0, height, width, 3))
    steps = params.settings.get("sampling_steps") if steps is None else steps
    chunk = int(params.settings.get("sample_batch", 32))
    frames = [
        _sample_chunk(params, bundles[start:start + chunk], weights, seeds[start:start + chunk], steps)
        for start in range(0, len(bundles), chunk)
    ]
    return np.concatenate(frames)


def sample_frame(params: NeuralSimParams, bundle: ConditioningBundle, weights: GuidanceWeights, seed: int,
                 steps: Optional[int] = None) -> np.ndarray:
    return sample_frames(params, [bundle], weights, [seed], steps)[0]


def null_bundle(params: NeuralSimParams) -> ConditioningBundle:
    settings = params.settings
    return ConditioningBundle({
        "visual": np.zeros((settings["window_visual"], settings["height"], settings["width"], 3), np.float32),
        "control": np.zeros((settings["window_action"], ACTION_DIM), np.float32),
        "drop_visual": True, "drop_control": True
    })


def sample_unconditional(params: NeuralSimParams, seed: int, steps: Optional[int] = None) -> np.ndarray:
    return sample_frame(params, null_bundle(params), GuidanceWeights({}), seed, steps)


def synthesize_episode(params: NeuralSimParams, sim_record: EpisodeRecord, weights: GuidanceWeights,
                       cfg: Optional[ExperimentConfig] = None, variant: Optional[str] = None) -> EpisodeRecord:
    """Translate one sim episode into a pseudo-real episode frame by frame.

    Args:
        params (NeuralSimParams): Neural simulator parameters.
        sim_record (EpisodeRecord): Source sim episode.
        weights (GuidanceWeights): Guidance weights.
        cfg (ExperimentConfig, optional): Experiment configuration (global seed and windows).
        variant (str, optional): Variant name recorded in the provenance.

    Returns:
        EpisodeRecord: Pseudo episode with the source actions and states.

    """
    cfg = resolve_config(cfg)
    bundles = [make_bundle(sim_record.frames, sim_record.actions, k, cfg) for k in range(len(sim_record.frames))]
    seeds = [derive_seed("pseudo", cfg.seed, sim_record.pair_key, k) for k in range(len(sim_record.frames))]
    frames = sample_frames(params, bundles, weights, seeds)
    provenance = {
        "renderer": "neuralsim", "source_episode": sim_record.episode_id, "variant": variant,
        "guidance": weights.serialized(), "model": params.fingerprint
    }
    return sim_record.with_channel("pseudo", np.stack([to_uint8(f) for f in frames]), provenance)


def synthesize_dataset(params: NeuralSimParams, sim_index: DatasetIndex, weights: GuidanceWeights,
                       cfg: Optional[ExperimentConfig] = None, out_root: Union[Path, str, None] = None,
                       variant: Optional[str] = None) -> DatasetIndex:
    """Write one pseudo episode per sim episode of an index.

    Episodes are synthesized on a thread pool capped by the configured jobs; each frame's noise is seeded by the global
    seed, pair key, and frame index, so the result does not depend on the worker count.

    Args:
        params (NeuralSimParams): Neural simulator parameters.
        sim_index (DatasetIndex): Index holding the source sim episodes.
        weights (GuidanceWeights): Guidance weights.
        cfg (ExperimentConfig, optional): Experiment configuration.
        out_root (Path | str): Output dataset root.
        variant (str, optional): Variant name recorded in the provenance.

    Returns:
        DatasetIndex: Consolidated index of the pseudo episodes.

    """
    cfg = resolve_config(cfg)
    if out_root is None:
        raise SamplingError("synthesize_dataset needs an output root.")
    weights.validate()
    params.check_finite()
    source_ids = sim_index.ids("sim")

    def synthesize(episode_id: str) -> str:
        source = read_episode(sim_index.episode_path(episode_id))
        write_episode(synthesize_episode(params, source, weights, cfg, variant), out_root)
        return episode_id

    with ThreadPoolExecutor(max_workers=max(1, int(cfg.jobs))) as executor:
        for done, episode_id in enumerate(executor.map(synthesize, source_ids), start=1):
            logger.debug(f"Synthesized pseudo episode for {episode_id} ({done}/{len(source_ids)}).")
    index = consolidate_index(out_root)
    logger.info(f"Synthesized {len(source_ids)} {variant or 'pseudo'} episodes into {out_root}.")
    return index
