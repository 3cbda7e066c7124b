# -*- coding: utf-8 -*-
"""CompSim module for pixel-statistic video quality metrics and suite evaluation.

Attributes:
    logger (Logger): Module level logger for usage and debugging.
    PSNR_CAP (float): Value returned by :func:`psnr` for identical frames.
    SSIM_CONSTANTS (dict): Window and stabilizing constants of :func:`ssim`.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import csv
import math
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from compsim.dataset import read_episode
from compsim.exceptions import MetricError
from compsim.logger import get_logger
from compsim.models import DatasetIndex, MetricReport
from compsim.utils import to_unit

logger = get_logger(__name__)

PSNR_CAP = 99.0
LUMINANCE_WEIGHTS = (0.299, 0.587, 0.114)
SSIM_CONSTANTS = {
    "window": 11, "sigma": 1.5, "k1": 0.01, "k2": 0.03, "dynamic_range": 1.0, "luminance": list(LUMINANCE_WEIGHTS)
}
REPORT_COLUMNS = ["task", "variant", "psnr", "ssim"]

MetricPlugin = Callable[[np.ndarray, np.ndarray], float]
_plugins: Dict[str, MetricPlugin] = {}


def _pair(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    a, b = to_unit(np.asarray(a)), to_unit(np.asarray(b))
    if a.shape != b.shape:
        raise MetricError(f"Frame shapes differ: {a.shape} vs {b.shape}.")
    return a, b


def psnr(a: np.ndarray, b: np.ndarray, max_val: float = 1.0) -> float:
    """Peak signal-to-noise ratio in decibels.

    uint8 frames are scaled to [0, 1] first, so max_val stays 1.0 for both frame types.

    Args:
        a (np.ndarray): First frame.
        b (np.ndarray): Second frame of the same shape.
        max_val (float): Peak signal value.

    Returns:
        float: 10 log10(max_val^2 / MSE), or 99.0 when the frames are identical.

    Raises:
        MetricError: On a shape mismatch or a non-positive max_val.

    """
    if max_val <= 0:
        raise MetricError(f"max_val={max_val} must be positive.")
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return 10.0 * math.log10(max_val ** 2 / mse)


def luminance(frame: np.ndarray) -> np.ndarray:
    frame = to_unit(np.asarray(frame))
    if frame.ndim == 2:
        return frame
    return frame[..., 0] * LUMINANCE_WEIGHTS[0] + frame[..., 1] * LUMINANCE_WEIGHTS[1] + \
        frame[..., 2] * LUMINANCE_WEIGHTS[2]


def ssim_map(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Local SSIM over the valid region of an 11x11 Gaussian window (sigma 1.5) on luminance.

    Args:
        a (np.ndarray): First frame (H, W, 3) or (H, W).
        b (np.ndarray): Second frame of the same shape.

    Returns:
        np.ndarray: SSIM map of shape (H - 10, W - 10).

    Raises:
        MetricError: On a shape mismatch or frames smaller than the window.

    """
    a, b = _pair(a, b)
    x, y = luminance(a), luminance(b)
    window, sigma = SSIM_CONSTANTS["window"], SSIM_CONSTANTS["sigma"]
    if x.shape[0] < window or x.shape[1] < window:
        raise MetricError(f"Frames of shape {x.shape} are smaller than the {window}x{window} SSIM window.")
    c1 = (SSIM_CONSTANTS["k1"] * SSIM_CONSTANTS["dynamic_range"]) ** 2
    c2 = (SSIM_CONSTANTS["k2"] * SSIM_CONSTANTS["dynamic_range"]) ** 2

    radius = window // 2

    def local_mean(image: np.ndarray) -> np.ndarray:
        filtered = ndimage.gaussian_filter(image, sigma=sigma, truncate=radius / sigma, mode="reflect")
        return filtered[radius:-radius, radius:-radius]

    mu_x, mu_y = local_mean(x), local_mean(y)
    var_x = local_mean(x * x) - mu_x ** 2
    var_y = local_mean(y * y) - mu_y ** 2
    cov = local_mean(x * y) - mu_x * mu_y
    return ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)) / ((mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2))


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Structural similarity of two frames (mean of :func:`ssim_map`).

    Args:
        a (np.ndarray): First frame.
        b (np.ndarray): Second frame of the same shape.

    Returns:
        float: SSIM in [-1, 1]; exactly 1.0 for identical frames.

    """
    a, b = _pair(a, b)
    if np.array_equal(a, b):
        return 1.0
    return float(np.clip(np.mean(ssim_map(a, b)), -1.0, 1.0))


def summarize(values: Iterable[float]) -> Tuple[float, float]:
    """Mean and population standard deviation (NaN for an empty sequence).

    Args:
        values (Iterable[float]): Values.

    Returns:
        tuple[float, float]: (mean, std).

    """
    values = [float(v) for v in values]
    if not values:
        return float("nan"), float("nan")
    mean = sum(values) / len(values)
    return mean, math.sqrt(sum((v - mean) ** 2 for v in values) / len(values))


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# PLUGINS # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def register_plugin(name: str, plugin: MetricPlugin) -> None:
    """Register a learned or external metric.

    A plugin receives the predicted and reference frame sequences of one episode (uint8 arrays of shape
    (N, H, W, 3)) and returns a scalar.

    Args:
        name (str): Report column name.
        plugin (Callable): Metric function.

    """
    if name in REPORT_COLUMNS:
        raise MetricError(f"Plugin name \"{name}\" collides with a native report column.")
    _plugins[name] = plugin
    logger.debug(f"Registered metric plugin {name}.")


def unregister_plugin(name: str) -> None:
    _plugins.pop(name, None)


def available_plugins() -> List[str]:
    return sorted(_plugins)


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# SUITES  # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def _matched_episodes(pred: DatasetIndex, ref: DatasetIndex, pred_channel: Optional[str],
                      ref_channel: str) -> Tuple[str, Dict[str, Tuple[str, str]], Dict[str, str]]:
    if pred_channel is None:
        pred_channel = "pseudo" if pred.ids("pseudo") else "sim"
    pred_keys, ref_keys = pred.by_pair_key(pred_channel), ref.by_pair_key(ref_channel)
    if set(pred_keys) != set(ref_keys):
        missing = sorted(set(ref_keys) - set(pred_keys))
        extra = sorted(set(pred_keys) - set(ref_keys))
        raise MetricError(f"Episode ids do not match between suites: missing {missing[:5]}, unexpected {extra[:5]}.",
                          payload={"missing": missing, "unexpected": extra})
    tasks = {e["pair_key"]: e["task"] for e in ref.episodes if e["channel"] == ref_channel}
    matched = {key: (pred_keys[key], ref_keys[key]) for key in sorted(ref_keys)}
    return pred_channel, matched, tasks


def evaluate_suite(pred: DatasetIndex, ref: DatasetIndex, plugins: Optional[Sequence[str]] = None,
                   variant: Optional[str] = None, pred_channel: Optional[str] = None,
                   ref_channel: str = "real") -> Tuple[List[Dict[str, Union[str, float]]], Dict[str, MetricReport]]:
    """Compare predicted episodes with reference episodes matched by pair key.

    Args:
        pred (DatasetIndex): Predicted episodes (pseudo by default, sim when the index holds no pseudo episodes).
        ref (DatasetIndex): Reference episodes.
        plugins (Sequence[str], optional): Registered plugin names to evaluate (all registered by default).
        variant (str, optional): Variant name written to the report rows (defaults to the predicted channel).
        pred_channel (str, optional): Channel of the predicted episodes.
        ref_channel (str): Channel of the reference episodes.

    Returns:
        tuple[list[dict], dict[str, MetricReport]]: One row per task (sorted) plus an ALL row, and a MetricReport per
        metric.

    Raises:
        MetricError: When the two suites do not hold the same pair keys.

    """
    pred_channel, matched, tasks = _matched_episodes(pred, ref, pred_channel, ref_channel)
    variant = variant or pred_channel
    plugin_names = list(plugins) if plugins is not None else available_plugins()
    missing_plugins = [name for name in plugin_names if name not in _plugins]
    if missing_plugins:
        logger.warning(f"Metric plugins {missing_plugins} are not registered; their columns are omitted.")
        plugin_names = [name for name in plugin_names if name in _plugins]

    per_frame: Dict[str, Dict[str, List[float]]] = {"psnr": {}, "ssim": {}}
    plugin_values: Dict[str, Dict[str, float]] = {name: {} for name in plugin_names}
    failed_plugins = set()
    for pair_key, (pred_id, ref_id) in matched.items():
        predicted = read_episode(pred.episode_path(pred_id))
        reference = read_episode(ref.episode_path(ref_id))
        if predicted.frames.shape != reference.frames.shape:
            raise MetricError(f"Episode {pair_key} has frames {predicted.frames.shape} vs {reference.frames.shape}.")
        per_frame["psnr"][pair_key] = [psnr(p, r) for p, r in zip(predicted.frames, reference.frames)]
        per_frame["ssim"][pair_key] = [ssim(p, r) for p, r in zip(predicted.frames, reference.frames)]
        for name in plugin_names:
            if name in failed_plugins:
                continue
            try:
                plugin_values[name][pair_key] = float(_plugins[name](predicted.frames, reference.frames))
            except Exception as err:
                logger.warning(f"Metric plugin {name} failed on {pair_key} and is left blank: {err}")
                failed_plugins.add(name)

    reports: Dict[str, MetricReport] = {}
    for metric, frames in per_frame.items():
        per_episode = {key: float(np.mean(values)) for key, values in frames.items()}
        mean, std = summarize(per_episode.values())
        constants = dict(SSIM_CONSTANTS) if metric == "ssim" else {"max_val": 1.0, "cap": PSNR_CAP}
        reports[metric] = MetricReport({"metric": metric, "constants": constants, "per_frame": frames,
                                        "per_episode": per_episode, "suite_mean": mean, "suite_std": std})
    for name in plugin_names:
        if name in failed_plugins:
            continue
        mean, std = summarize(plugin_values[name].values())
        reports[name] = MetricReport({"metric": name, "constants": {"plugin": True}, "per_episode": plugin_values[name],
                                      "suite_mean": mean, "suite_std": std})

    columns = ["psnr", "ssim"] + plugin_names
    rows: List[Dict[str, Union[str, float]]] = []
    for task in sorted(set(tasks.values())):
        keys = [key for key in matched if tasks[key] == task]
        row: Dict[str, Union[str, float]] = {"task": task, "variant": variant}
        for column in columns:
            row[column] = _column_mean(reports.get(column), keys)
        rows.append(row)
    overall: Dict[str, Union[str, float]] = {"task": "ALL", "variant": variant}
    for column in columns:
        overall[column] = _column_mean(reports.get(column), list(matched))
    rows.append(overall)
    logger.info(f"Evaluated {len(matched)} {variant} episodes: PSNR {overall['psnr']:.3f} dB, "
                f"SSIM {overall['ssim']:.4f}.")
    return rows, reports


def _column_mean(report: Optional[MetricReport], keys: Sequence[str]) -> Union[float, str]:
    if report is None:
        return ""
    return summarize(report.per_episode[key] for key in keys)[0]


def write_report_csv(rows: Sequence[Dict[str, Union[str, float]]], report_file: Union[Path, str]) -> Path:
    """Write report.csv rows (task, variant, psnr, ssim, then plugin columns in first-seen order).

    Args:
        rows (Sequence[dict]): Rows from :func:`evaluate_suite`, possibly for several variants.
        report_file (Path | str): Output CSV path.

    Returns:
        Path: The written file.

    """
    columns = list(REPORT_COLUMNS)
    for row in rows:
        columns.extend(key for key in row if key not in columns)
    report_file = Path(report_file)
    report_file.parent.mkdir(parents=True, exist_ok=True)
    with open(report_file, "w", encoding="utf-8", newline="") as csv_file:
        writer = csv.writer(csv_file, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(column, "")) for column in columns])
    return report_file


def _cell(value: Union[str, float]) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def read_report_csv(report_file: Union[Path, str]) -> List[Dict[str, str]]:
    with open(report_file, "r", encoding="utf-8", newline="") as csv_file:
        return list(csv.DictReader(csv_file))
