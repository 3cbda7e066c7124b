# -*- coding: utf-8 -*-
"""Pytest integration tests for the CompSim stage pipeline.

Note:
    Tests running every pipeline stage on the tiny quickstart configuration.

Attributes:
    logger (Logger): Pipeline integration tests logger.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import csv
import json
import logging
import warnings

import pytest

from compsim.config import load_config
from compsim.dataset import load_index, read_episode
from compsim.logger import get_logger
from compsim.models import StageManifest, TaskSpec
from compsim.pipeline import STAGES, Pipeline, generate_real_dataset, generate_sim_dataset
from compsim.utils import prettify_data
from quickstart import quickstart

logger = get_logger(__name__)

# Suppress per-episode debug logging of the dataset writers
logging.getLogger("compsim.dataset").setLevel(level=logging.INFO)

# Ignore resource warnings from unittest module
warnings.simplefilter("ignore", ResourceWarning)


def _rows(path):
    with open(path, "r", encoding="utf-8", newline="") as csv_file:
        return list(csv.DictReader(csv_file))


@pytest.mark.integration
def test_generate_datasets_deterministic(data_dir, tiny_cfg, task_label, episodes, seed):
    """Integration test for generating the same sim and real datasets twice.

    Note:
        Tests :func:`~compsim.pipeline.generate_sim_dataset` and :func:`~compsim.pipeline.generate_real_dataset`.

    Returns:
        None

    """
    plan = [(TaskSpec.from_label(task_label), seed + i) for i in range(episodes)]
    first_sim = generate_sim_dataset(plan, data_dir / "a" / "sim", tiny_cfg)
    second_sim = generate_sim_dataset(plan, data_dir / "b" / "sim", tiny_cfg.with_overrides({"jobs": 2}))
    assert len(first_sim) == episodes
    assert first_sim.digest == second_sim.digest

    first_real = generate_real_dataset(data_dir / "a" / "sim", data_dir / "a" / "real", tiny_cfg)
    second_real = generate_real_dataset(data_dir / "b" / "sim", data_dir / "b" / "real", tiny_cfg)
    assert first_real.digest == second_real.digest
    for episode_id in first_real.ids("real"):
        assert (data_dir / "a" / "real" / episode_id / "actions.csv").read_bytes() == \
            (data_dir / "b" / "real" / episode_id / "actions.csv").read_bytes()


@pytest.mark.integration
def test_run_all_stages(completed_run, show_log_output):
    """Integration test for the artifacts and manifests of a complete run.

    Note:
        Tests :meth:`~compsim.pipeline.Pipeline.run`.

    Returns:
        None

    """
    for stage in STAGES:
        with open(completed_run / "manifests" / f"{stage}.json", "r", encoding="utf-8") as manifest_file:
            manifest = StageManifest(json.load(manifest_file))
        assert manifest.status == "complete"
        if show_log_output:
            logger.info(prettify_data(manifest))

    report = _rows(completed_run / "report.csv")
    assert [row["variant"] for row in report if row["task"] == "ALL"] == ["sim", "cd", "vd", "full"]

    results = _rows(completed_run / "regime_results.csv")
    assert {row["regime"] for row in results} == {"r10", quickstart.get_regime_name()}
    assert {row["suite"] for row in results} == {"in_domain", "ood_spatial"}
    assert all(row["trials"] == "2" for row in results)

    assert sorted(p.name for p in (completed_run / "tables").iterdir()) == ["table1.csv", "table2.csv", "table3.csv"]
    alignment = json.loads((completed_run / "calibration" / "alignment.json").read_text())
    assert alignment["misaligned"] == []


@pytest.mark.integration
def test_pseudo_episodes_keep_source_actions(completed_run):
    """Integration test for byte-identical actions between pseudo episodes and their sim sources.

    Note:
        Tests :meth:`~compsim.pipeline.Pipeline.synthesize`.

    Returns:
        None

    """
    sources = {
        "heldout_full": "episodes/sim/heldout",
        "heldout_cd": "episodes/sim/heldout",
        "policy": "episodes/sim/policy"
    }
    for pseudo_dir, sim_dir in sources.items():
        index = load_index(completed_run / "pseudo" / pseudo_dir)
        assert len(index) > 0
        for episode_id in index.ids("pseudo"):
            record = read_episode(index.episode_path(episode_id))
            source = completed_run / sim_dir / record.provenance["source_episode"]
            assert (index.episode_path(episode_id) / "actions.csv").read_bytes() == \
                (source / "actions.csv").read_bytes()


@pytest.mark.integration
def test_rerun_is_cached(completed_run):
    """Integration test for re-running a completed pipeline with an identical configuration.

    Note:
        Tests :meth:`~compsim.pipeline.Pipeline.run_stage`.

    Returns:
        None

    """
    written = {p.name: p.stat().st_mtime_ns for p in (completed_run / "manifests").iterdir()}
    report = (completed_run / "report.csv").read_bytes()

    cfg = load_config(overrides=quickstart.get_config_overrides(), apply_env=False)
    Pipeline(completed_run, cfg.with_overrides({"jobs": 3})).run()

    assert {p.name: p.stat().st_mtime_ns for p in (completed_run / "manifests").iterdir()} == written
    assert (completed_run / "report.csv").read_bytes() == report


@pytest.mark.integration
def test_rerun_is_deterministic(completed_run, pipeline):
    """Integration test for byte-identical reports from two runs under one seed.

    Note:
        Tests :meth:`~compsim.pipeline.Pipeline.run`.

    Returns:
        None

    """
    run_dir = pipeline.run()
    assert (run_dir / "report.csv").read_bytes() == (completed_run / "report.csv").read_bytes()
    assert (run_dir / "regime_results.csv").read_bytes() == (completed_run / "regime_results.csv").read_bytes()
    assert pipeline.read_manifest("eval-policy").output_digest == \
        Pipeline(completed_run, pipeline.cfg).read_manifest("eval-policy").output_digest
