# -*- coding: utf-8 -*-
"""Pytest unit tests for CompSim metrics module.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import numpy as np
import pytest

from compsim.dataset import load_index, write_episode
from compsim.exceptions import MetricError
from compsim.metrics import (
    PSNR_CAP, evaluate_suite, psnr, read_report_csv, register_plugin, ssim, summarize, unregister_plugin,
    write_report_csv
)
from compsim.models import DatasetIndex, TaskSpec
from compsim.realchannel import generate_paired_episode


@pytest.fixture
def suite_roots(tmp_path, card_pair, cfg):
    """Sim and real roots holding the pairs of two tasks."""
    bottle = generate_paired_episode(TaskSpec.from_label("shake_bottle"), 0, cfg=cfg)
    for pair in (card_pair, bottle):
        write_episode(pair.sim, tmp_path / "sim")
        write_episode(pair.real, tmp_path / "real")
    return load_index(tmp_path / "sim"), load_index(tmp_path / "real")


@pytest.mark.unit
def test_psnr():
    """Unit test for peak signal-to-noise ratio on float and 8-bit frames.

    Note:
        Tests :func:`~compsim.metrics.psnr`.

    Returns:
        None

    """
    zeros, ones = np.zeros((8, 8, 3)), np.ones((8, 8, 3))
    assert psnr(zeros, zeros) == PSNR_CAP == 99.0
    assert psnr(zeros, ones) == pytest.approx(0.0)
    assert psnr(zeros, np.full((8, 8, 3), 0.1)) == pytest.approx(20.0)
    assert psnr(np.zeros((8, 8, 3), np.uint8), np.full((8, 8, 3), 255, np.uint8)) == pytest.approx(0.0)

    with pytest.raises(MetricError):
        psnr(zeros, np.zeros((4, 4, 3)))
    with pytest.raises(MetricError):
        psnr(zeros, ones, max_val=0.0)


@pytest.mark.unit
def test_ssim():
    """Unit test for structural similarity with its closed form on constant images.

    Note:
        Tests :func:`~compsim.metrics.ssim`.

    Returns:
        None

    """
    half, quarter = np.full((16, 16, 3), 0.5), np.full((16, 16, 3), 0.25)
    assert ssim(half, half) == 1.0
    expected = (2 * 0.125 + 1e-4) / (0.3125 + 1e-4)
    assert ssim(half, quarter) == pytest.approx(expected, rel=1e-4)
    assert ssim(half, quarter) == pytest.approx(0.8001, abs=1e-4)

    noisy = np.clip(half + np.random.default_rng(0).normal(0.0, 0.1, half.shape), 0.0, 1.0)
    assert -1.0 <= ssim(half, noisy) < 1.0

    with pytest.raises(MetricError):
        ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)) + 0.5)


def _windowed_ssim(a, b):
    offsets = np.arange(-5, 6)
    kernel = np.exp(-offsets ** 2 / (2 * 1.5 ** 2))
    weights = np.outer(kernel, kernel) / np.sum(kernel) ** 2
    x = a @ np.array([0.299, 0.587, 0.114])
    y = b @ np.array([0.299, 0.587, 0.114])
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    scores = []
    for i in range(5, x.shape[0] - 5):
        for j in range(5, x.shape[1] - 5):
            px, py = x[i - 5:i + 6, j - 5:j + 6], y[i - 5:i + 6, j - 5:j + 6]
            mx, my = np.sum(weights * px), np.sum(weights * py)
            vx, vy = np.sum(weights * (px - mx) ** 2), np.sum(weights * (py - my) ** 2)
            cov = np.sum(weights * (px - mx) * (py - my))
            scores.append((2 * mx * my + c1) * (2 * cov + c2) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2)))
    return float(np.mean(scores))


@pytest.mark.unit
def test_metrics_match_windowed_definitions():
    """Unit test for PSNR and SSIM against direct per-window evaluations of their definitions.

    Note:
        Tests :func:`~compsim.metrics.psnr` and :func:`~compsim.metrics.ssim`.

    Returns:
        None

    """
    rng = np.random.default_rng(5)
    for _ in range(100):
        a = rng.uniform(0.0, 1.0, (16, 16, 3))
        b = np.clip(a + rng.normal(0.0, 0.2, a.shape), 0.0, 1.0)
        assert psnr(a, b) == pytest.approx(10.0 * np.log10(1.0 / np.mean((a - b) ** 2)), abs=1e-9)
        assert ssim(a, b) == pytest.approx(_windowed_ssim(a, b), abs=1e-9)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
        assert psnr(a, b) == psnr(b, a)
        assert ssim(a, a) == 1.0


@pytest.mark.unit
def test_summarize():
    """Unit test for the mean and population standard deviation of a sequence.

    Note:
        Tests :func:`~compsim.metrics.summarize`.

    Returns:
        None

    """
    assert summarize([1.0, 3.0]) == (2.0, 1.0)
    mean, std = summarize([])
    assert np.isnan(mean) and np.isnan(std)


@pytest.mark.unit
def test_evaluate_suite_identity(suite_roots):
    """Unit test for a suite compared with itself.

    Note:
        Tests :func:`~compsim.metrics.evaluate_suite`.

    Returns:
        None

    """
    _, real = suite_roots
    rows, reports = evaluate_suite(real, real, pred_channel="real", variant="real")
    assert [row["task"] for row in rows] == ["move_card_away", "shake_bottle", "ALL"]
    assert all(row["psnr"] == PSNR_CAP for row in rows)
    assert all(row["ssim"] == 1.0 for row in rows)
    assert reports["psnr"].suite_std == 0.0


@pytest.mark.unit
def test_evaluate_suite_sim_against_real(suite_roots, tmp_path):
    """Unit test for the per-task and overall rows of a sim suite against its real counterpart.

    Note:
        Tests :func:`~compsim.metrics.evaluate_suite` and :func:`~compsim.metrics.write_report_csv`.

    Returns:
        None

    """
    sim, real = suite_roots
    rows, reports = evaluate_suite(sim, real)
    assert [row["variant"] for row in rows] == ["sim"] * 3
    assert all(0.0 < row["psnr"] < PSNR_CAP for row in rows)
    assert rows[-1]["psnr"] == pytest.approx(reports["psnr"].suite_mean)
    assert len(reports["ssim"].per_frame["move_card_away-s00000"]) > 1

    shuffled = DatasetIndex({"root": sim.root, "episodes": list(reversed(sim.episodes)), "digest": sim.digest})
    assert evaluate_suite(shuffled, real)[0] == rows

    report_file = write_report_csv(rows, tmp_path / "report" / "report.csv")
    loaded = read_report_csv(report_file)
    assert list(loaded[0]) == ["task", "variant", "psnr", "ssim"]
    assert loaded[-1]["task"] == "ALL"
    assert float(loaded[-1]["psnr"]) == pytest.approx(rows[-1]["psnr"], abs=1e-6)


@pytest.mark.unit
def test_evaluate_suite_plugins(suite_roots):
    """Unit test for learned-metric plugins, including one that fails.

    Note:
        Tests :func:`~compsim.metrics.register_plugin` and :func:`~compsim.metrics.evaluate_suite`.

    Returns:
        None

    """
    sim, real = suite_roots

    def mean_abs(pred, ref):
        return float(np.mean(np.abs(pred.astype(float) - ref.astype(float))))

    def broken(pred, ref):
        raise RuntimeError("model weights unavailable")

    with pytest.raises(MetricError):
        register_plugin("psnr", mean_abs)

    register_plugin("mean_abs", mean_abs)
    register_plugin("broken", broken)
    try:
        rows, reports = evaluate_suite(sim, real, plugins=["mean_abs", "broken"])
    finally:
        unregister_plugin("mean_abs")
        unregister_plugin("broken")

    assert rows[-1]["mean_abs"] > 0.0
    assert rows[-1]["broken"] == ""
    assert "broken" not in reports
    assert rows[-1]["psnr"] > 0.0


@pytest.mark.unit
def test_evaluate_suite_id_mismatch(suite_roots):
    """Unit test for suites that do not hold the same episodes.

    Note:
        Tests :func:`~compsim.metrics.evaluate_suite`.

    Returns:
        None

    """
    sim, real = suite_roots
    partial = DatasetIndex({"root": sim.root, "episodes": sim.episodes[:1], "digest": ""})
    with pytest.raises(MetricError):
        evaluate_suite(partial, real)
