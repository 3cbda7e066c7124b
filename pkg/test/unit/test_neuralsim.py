# -*- coding: utf-8 -*-
"""Pytest unit tests for CompSim neuralsim module.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import math

import numpy as np
import pytest
import torch
from torch import nn

from compsim import neuralsim
from compsim.exceptions import SamplingError, TrainingError
from compsim.models import GuidanceWeights
from compsim.neuralsim import (
    DenoiseBatch, NeuralSimParams, NoiseSchedule, compose_scores, denoise_loss, forward_diffuse, last_finite_dir,
    loss_and_gradients, make_bundle, sample_frame, sample_unconditional, synthesize_episode, train
)


class _ConstantNoise(nn.Module):
    """Predicts a fixed tensor whatever the input."""

    def __init__(self, prediction: torch.Tensor):
        super().__init__()
        self.prediction = prediction

    def forward(self, x, t, visual, control, drop_visual, drop_control):
        return self.prediction


class _TenParameterStub(nn.Module):
    """Smooth float64 noise predictor with exactly ten parameters."""

    def __init__(self):
        super().__init__()
        self.theta = nn.Parameter(torch.linspace(-0.5, 0.8, 10, dtype=torch.float64))

    def forward(self, x, t, visual, control, drop_visual, drop_control):
        theta = self.theta
        linear = x * theta[0:3].view(1, 3, 1, 1) + theta[3:6].view(1, 3, 1, 1)
        curved = torch.tanh(theta[6] * x) * theta[7] + theta[8] * x ** 2
        return linear + curved + theta[9] * t.to(torch.float64).view(-1, 1, 1, 1) / 10.0


def _batch(target: torch.Tensor) -> DenoiseBatch:
    batch_size = target.shape[0]
    return DenoiseBatch(target=target, visual=torch.zeros((batch_size, 1, 1, 1), dtype=target.dtype),
                        control=torch.zeros((batch_size, 1), dtype=target.dtype))


@pytest.mark.unit
def test_noise_schedule():
    """Unit test for the linear beta schedule and the visited sampling steps.

    Note:
        Tests :class:`~compsim.neuralsim.NoiseSchedule`.

    Returns:
        None

    """
    schedule = NoiseSchedule({"T": 10, "beta_start": 1e-4, "beta_end": 0.02})
    alpha_bars = schedule.alpha_bars
    assert alpha_bars[0] == 1.0
    assert len(alpha_bars) == 11
    assert np.all(np.diff(alpha_bars) < 0)
    assert schedule.sampling_steps() == list(range(10, 0, -1))
    assert schedule.sampling_steps(2) == [10, 1]

    with pytest.raises(SamplingError):
        NoiseSchedule({"T": 10, "beta_start": 0.02, "beta_end": 1e-4})
    with pytest.raises(SamplingError):
        schedule.alpha_bar(11)


@pytest.mark.unit
def test_forward_diffuse():
    """Unit test for noising a clean frame to a diffusion step.

    Note:
        Tests :func:`~compsim.neuralsim.forward_diffuse`.

    Returns:
        None

    """
    schedule = NoiseSchedule({"T": 50})
    rng = np.random.default_rng(0)
    x0 = rng.uniform(-1.0, 1.0, size=(4, 4, 3))
    eps = rng.standard_normal((4, 4, 3))

    assert np.array_equal(forward_diffuse(x0, 0, eps, schedule), x0)
    for t in (1, 25, 50):
        assert np.array_equal(forward_diffuse(np.zeros(3), t, np.zeros(3), schedule), np.zeros(3))

    alpha_bar = schedule.alpha_bar(25)
    expected = math.sqrt(alpha_bar) * x0 + math.sqrt(1.0 - alpha_bar) * eps
    assert np.allclose(forward_diffuse(x0, 25, eps, schedule), expected)

    with pytest.raises(SamplingError):
        forward_diffuse(x0, 51, eps, schedule)
    with pytest.raises(SamplingError):
        forward_diffuse(x0, -1, eps, schedule)
    with pytest.raises(SamplingError):
        forward_diffuse(x0, 1, eps[:2], schedule)


@pytest.mark.unit
def test_forward_diffuse_statistics():
    """Unit test for the mean of noised frames over many noise draws.

    Note:
        Tests :func:`~compsim.neuralsim.forward_diffuse`.

    Returns:
        None

    """
    schedule = NoiseSchedule({"T": 50})
    t, draws = 20, 10000
    x0 = np.full((draws, 1), 0.6)
    eps = np.random.default_rng(7).standard_normal((draws, 1))

    x_t = forward_diffuse(x0, t, eps, schedule)
    sigma = math.sqrt(1.0 - schedule.alpha_bar(t)) / math.sqrt(draws)
    assert abs(float(x_t.mean()) - math.sqrt(schedule.alpha_bar(t)) * 0.6) < 3.0 * sigma


@pytest.mark.unit
def test_compose_scores_arithmetic():
    """Unit test for additive and joint composition of branch predictions.

    Note:
        Tests :func:`~compsim.neuralsim.compose_scores`.

    Returns:
        None

    """
    eps_u, eps_v, eps_a = np.zeros((2, 2)), np.ones((2, 2)), np.full((2, 2), 2.0)
    composed = compose_scores(eps_u, eps_v, eps_a, None, GuidanceWeights({"w_v": 2.0, "w_a": 3.0}))
    assert np.array_equal(composed, np.full((2, 2), 8.0))

    joint = compose_scores(eps_u, None, None, eps_a, GuidanceWeights({"w_v": 1.5, "w_a": 0.5, "joint_mode": True}))
    assert np.array_equal(joint, np.full((2, 2), 3.0))

    composed = compose_scores(torch.zeros(3), torch.ones(3), None, None, GuidanceWeights({"w_v": 1.5}))
    assert torch.equal(composed, torch.full((3,), 1.5))


@pytest.mark.unit
def test_compose_scores_degenerate_limits():
    """Unit test for the unconditional and single-branch limits over random predictions.

    Note:
        Tests :func:`~compsim.neuralsim.compose_scores`.

    Returns:
        None

    """
    rng = np.random.default_rng(1)
    unconditional = GuidanceWeights({})
    visual_only = GuidanceWeights({"w_v": 1.0})
    control_only = GuidanceWeights({"w_a": 1.0})
    for _ in range(1000):
        eps_u, eps_v, eps_a = (rng.standard_normal((3, 4)) for _ in range(3))
        assert np.array_equal(compose_scores(eps_u, eps_v, eps_a, None, unconditional), eps_u)
        assert np.array_equal(compose_scores(eps_u, eps_v, eps_a, None, visual_only), eps_v)
        assert np.array_equal(compose_scores(eps_u, eps_v, eps_a, None, control_only), eps_a)


@pytest.mark.unit
def test_compose_scores_errors():
    """Unit test for invalid weights and mismatched predictions.

    Note:
        Tests :func:`~compsim.neuralsim.compose_scores` and :meth:`~compsim.models.GuidanceWeights.validate`.

    Returns:
        None

    """
    eps = np.zeros((2, 2))
    with pytest.raises(SamplingError):
        compose_scores(eps, eps, eps, None, GuidanceWeights({"w_v": -1.0}))
    with pytest.raises(SamplingError):
        compose_scores(eps, np.zeros(3), eps, None, GuidanceWeights({"w_v": 1.0, "w_a": 1.0}))
    with pytest.raises(SamplingError):
        compose_scores(eps, None, eps, None, GuidanceWeights({"w_v": 1.0, "w_a": 1.0}))
    with pytest.raises(SamplingError):
        compose_scores(eps, None, None, None, GuidanceWeights({"w_v": 1.0, "joint_mode": True}))
    with pytest.raises(SamplingError):
        compose_scores(eps, eps, eps, eps, GuidanceWeights({"w_v": 1.0}))


@pytest.mark.unit
def test_denoise_loss_stub_networks():
    """Unit test for the loss of a perfect and of an all-zero noise predictor.

    Note:
        Tests :func:`~compsim.neuralsim.denoise_loss`.

    Returns:
        None

    """
    schedule = NoiseSchedule({"T": 50})
    generator = torch.Generator().manual_seed(0)
    target = torch.rand((256, 3, 8, 8), generator=generator) * 2.0 - 1.0
    noise = torch.randn(target.shape, generator=generator)
    t = torch.randint(1, 51, (256,), generator=generator)

    perfect = denoise_loss(_ConstantNoise(noise), _batch(target), schedule, t=t, noise=noise)
    assert float(perfect) == 0.0

    zero = denoise_loss(_ConstantNoise(torch.zeros_like(target)), _batch(target), schedule, generator=generator)
    assert 0.95 <= float(zero) <= 1.05

    with pytest.raises(TrainingError):
        denoise_loss(_ConstantNoise(torch.full_like(target, float("nan"))), _batch(target), schedule)
    with pytest.raises(TrainingError):
        denoise_loss(_ConstantNoise(target[:0]), _batch(target[:0]), schedule)


@pytest.mark.unit
def test_loss_gradients_match_finite_differences():
    """Unit test for exact loss gradients against central finite differences.

    Note:
        Tests :func:`~compsim.neuralsim.loss_and_gradients`.

    Returns:
        None

    """
    schedule = NoiseSchedule({"T": 10})
    generator = torch.Generator().manual_seed(3)
    target = torch.rand((4, 3, 2, 2), generator=generator, dtype=torch.float64) * 2.0 - 1.0
    noise = torch.randn(target.shape, generator=generator, dtype=torch.float64)
    t = torch.tensor([1, 4, 7, 10])
    network = _TenParameterStub()

    loss, gradients = loss_and_gradients(network, _batch(target), schedule, t=t, noise=noise)
    analytic = gradients[0].detach().numpy()
    assert analytic.shape == (10,)
    assert loss > 0

    step = 1e-6
    numeric = np.zeros(10)
    with torch.no_grad():
        for i in range(10):
            original = float(network.theta[i])
            network.theta[i] = original + step
            plus = float(denoise_loss(network, _batch(target), schedule, t=t, noise=noise))
            network.theta[i] = original - step
            minus = float(denoise_loss(network, _batch(target), schedule, t=t, noise=noise))
            network.theta[i] = original
            numeric[i] = (plus - minus) / (2.0 * step)

    relative = np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    assert relative.max() < 1e-4


@pytest.mark.unit
def test_train_is_reproducible(card_pair, small_cfg, tmp_path):
    """Unit test for training a small neural simulator twice with one seed.

    Note:
        Tests :func:`~compsim.neuralsim.train` and :meth:`~compsim.neuralsim.NeuralSimParams.load`.

    Returns:
        None

    """
    params, report = train([card_pair], small_cfg)
    _, again = train([card_pair], small_cfg)

    assert report.epoch_losses == again.epoch_losses
    assert len(report.epoch_losses) == 1
    assert report.epoch_losses[0] >= 0.0
    assert report.best_epoch == 1
    assert report.train_pairs == [card_pair.pair_key]

    loaded = NeuralSimParams.load(params.save(tmp_path / "neuralsim"))
    assert loaded.fingerprint == params.fingerprint
    assert loaded.schedule.T == 10

    with pytest.raises(TrainingError):
        train([], small_cfg)


@pytest.mark.unit
def test_train_divergence_saves_last_finite_checkpoint(card_pair, small_cfg, tmp_path, monkeypatch):
    """Unit test for aborting on a non-finite loss and keeping the last finite parameters on disk.

    Note:
        Tests :func:`~compsim.neuralsim.train` and :func:`~compsim.neuralsim.last_finite_dir`.

    Returns:
        None

    """
    real_loss = neuralsim.denoise_loss

    def nan_loss(*args, **kwargs):
        return real_loss(*args, **kwargs) * float("nan")

    monkeypatch.setattr(neuralsim, "denoise_loss", nan_loss)
    out_dir = last_finite_dir(tmp_path / "model")
    assert out_dir == tmp_path / "model_last_finite"

    with pytest.raises(TrainingError) as err:
        train([card_pair], small_cfg, checkpoint_dir=out_dir)
    assert err.value.path == str(out_dir)
    assert all(torch.isfinite(tensor).all() for tensor in err.value.checkpoint.values())

    loaded = NeuralSimParams.load(out_dir)
    loaded.check_finite()
    for name, tensor in loaded.network.state_dict().items():
        assert torch.equal(tensor, err.value.checkpoint[name])

    with pytest.raises(TrainingError) as in_memory:
        train([card_pair], small_cfg)
    assert in_memory.value.path is None
    assert in_memory.value.checkpoint is not None


@pytest.mark.unit
def test_sample_and_synthesize(card_pair, small_cfg):
    """Unit test for seeded sampling and frame-by-frame synthesis of a pseudo episode.

    Note:
        Tests :func:`~compsim.neuralsim.sample_frame` and :func:`~compsim.neuralsim.synthesize_episode`.

    Returns:
        None

    """
    torch.manual_seed(0)
    params = NeuralSimParams.from_config(small_cfg)
    sim = card_pair.sim
    bundle = make_bundle(sim.frames, sim.actions, 3, small_cfg)
    full = small_cfg.guidance("full")

    frame = sample_frame(params, bundle, full, seed=5)
    assert frame.shape == (64, 64, 3)
    assert frame.min() >= 0.0 and frame.max() <= 1.0
    assert np.array_equal(frame, sample_frame(params, bundle, full, seed=5))
    assert np.array_equal(sample_frame(params, bundle, GuidanceWeights({}), seed=5), sample_unconditional(params, 5))

    pseudo = synthesize_episode(params, sim, full, small_cfg, variant="full")
    assert pseudo.channel == "pseudo"
    assert pseudo.actions == sim.actions
    assert pseudo.frames.shape == sim.frames.shape
    assert pseudo.frames.dtype == np.uint8
    assert pseudo.provenance["source_episode"] == sim.episode_id
    pseudo.validate()

    params.network.conv_out.bias.data.fill_(float("nan"))
    with pytest.raises(SamplingError):
        sample_frame(params, bundle, full, seed=5)
