# -*- coding: utf-8 -*-
"""CompSim module for running the real-sim-real loop as a sequence of cached, manifest-tracked stages.

Every stage writes its outputs under one run directory and records a manifest at ``manifests/<stage>.json`` holding the
configuration hash, the global seed, the digests of the upstream stage outputs it consumed, the digest of its own
outputs, and the resolved configuration. A stage whose manifest matches the current configuration and inputs, and whose
outputs are unchanged on disk, is skipped.

Example:
    The Pipeline can be used as follows::

        cfg = load_config("config/experiment.json")
        pipeline = Pipeline("runs/demo", cfg)
        pipeline.run(["gen-sim", "gen-real", "calibrate"])

Attributes:
    logger (Logger): Module level logger for usage and debugging.
    STAGES (tuple[str]): Stage names in execution order.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import csv
import json
import os
import shutil
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from compsim.blockworld import supports_object_variant
from compsim.calib import calibrate_rig
from compsim.config import ExperimentConfig, resolve_config
from compsim.dataset import EpisodeStore, consolidate_index, load_index, load_pairs, read_episode, validate_alignment
from compsim.exceptions import DatasetValidationError, StageDependencyError
from compsim.logger import get_logger
from compsim.metrics import evaluate_suite, read_report_csv, write_report_csv
from compsim.models import DatasetIndex, EpisodeRecord, PairedEpisode, StageManifest, TaskSpec
from compsim.neuralsim import NeuralSimParams, last_finite_dir, synthesize_dataset, train
from compsim.policy import (
    PolicyParams, build_regime, build_suites, evaluate_regimes, read_regime_csv, train_policy, write_regime_csv
)
from compsim.realchannel import generate_sim_episode, regenerate_real_episode
from compsim.utils import config_hash, derive_seed, jsonify_data_to_file, tree_digest

logger = get_logger(__name__)

STAGES = ("gen-sim", "gen-real", "calibrate", "train-neuralsim", "synthesize", "eval-video", "train-policy",
          "eval-policy", "report")

# artifact named in dependency errors when the stage has not run
STAGE_ARTIFACTS = {
    "gen-sim": "episodes/sim/train/index.json",
    "gen-real": "episodes/real/train/index.json",
    "calibrate": "calibration/camera.json",
    "train-neuralsim": "model/checkpoint.json",
    "synthesize": "pseudo",
    "eval-video": "report.csv",
    "train-policy": "policies",
    "eval-policy": "regime_results.csv",
    "report": "tables",
}
STAGE_OUTPUTS = {
    "gen-sim": ["episodes/sim"],
    "gen-real": ["episodes/real"],
    "calibrate": ["calibration"],
    "train-neuralsim": ["model"],
    "synthesize": ["pseudo"],
    "eval-video": ["report.csv"],
    "train-policy": ["policies"],
    "eval-policy": ["regime_results.csv"],
    "report": ["tables"],
}
VIDEO_VARIANT_ORDER = ("sim", "cd", "vd", "full")
# policy_sim demonstrations cycle through these (init_region, object_variant) pairs
POLICY_SIM_VARIANTS = (("in_domain", "canonical"), ("ood_spatial", "canonical"), ("in_domain", "ood_object"))


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# DATASET GENERATION  # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def policy_sim_task(label: str, index: int) -> TaskSpec:
    """Task variant of the index-th simulated policy demonstration of a task label.

    Args:
        label (str): Task label.
        index (int): Demonstration index.

    Returns:
        TaskSpec: Task with its init region and object variant (canonical objects for tasks without a bottle or card).

    """
    init_region, object_variant = POLICY_SIM_VARIANTS[index % len(POLICY_SIM_VARIANTS)]
    name = TaskSpec.from_label(label).name
    if not supports_object_variant(name, object_variant):
        object_variant = "canonical"
    return TaskSpec.from_label(label, init_region, object_variant)


def _write_all(plan: Sequence[Tuple[TaskSpec, int]], out_root: Path, cfg: ExperimentConfig,
               make: Callable[[TaskSpec, int], EpisodeRecord]) -> DatasetIndex:
    out_root.mkdir(parents=True, exist_ok=True)

    def write(item: Tuple[TaskSpec, int]) -> str:
        record = make(*item)
        EpisodeStore(out_root).write(record)
        return record.episode_id

    with ThreadPoolExecutor(max_workers=max(1, int(cfg.jobs))) as executor:
        for episode_id in executor.map(write, plan):
            logger.debug(f"Wrote {episode_id} to {out_root}.")
    return consolidate_index(out_root)


def generate_sim_dataset(plan: Sequence[Tuple[TaskSpec, int]], out_root: Union[Path, str],
                         cfg: Optional[ExperimentConfig] = None) -> DatasetIndex:
    """Schedule and render sim episodes for a list of (task, seed) pairs.

    Args:
        plan (Sequence[tuple[TaskSpec, int]]): Episodes to generate.
        out_root (Path | str): Dataset root.
        cfg (ExperimentConfig, optional): Experiment configuration.

    Returns:
        DatasetIndex: Consolidated index.

    """
    cfg = resolve_config(cfg)
    camera = cfg.camera_model()
    index = _write_all(plan, Path(out_root), cfg, lambda task, seed: generate_sim_episode(task, seed, camera, cfg))
    logger.info(f"Generated {len(index)} sim episodes under {out_root}.")
    return index


def generate_real_dataset(sim_root: Union[Path, str], out_root: Union[Path, str],
                          cfg: Optional[ExperimentConfig] = None) -> DatasetIndex:
    """Render the real channel of every sim episode under a dataset root.

    Args:
        sim_root (Path | str): Root holding the sim episodes.
        out_root (Path | str): Root receiving the real episodes.
        cfg (ExperimentConfig, optional): Experiment configuration.

    Returns:
        DatasetIndex: Consolidated index of the real episodes.

    """
    cfg = resolve_config(cfg)
    params = cfg.appearance_params()
    sim_index = load_index(sim_root)
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)

    def write(episode_id: str) -> str:
        real = regenerate_real_episode(read_episode(sim_index.episode_path(episode_id)), params, cfg)
        EpisodeStore(out_root).write(real)
        return real.episode_id

    with ThreadPoolExecutor(max_workers=max(1, int(cfg.jobs))) as executor:
        for episode_id in executor.map(write, sim_index.ids("sim")):
            logger.debug(f"Rendered {episode_id}.")
    index = consolidate_index(out_root)
    logger.info(f"Rendered {len(index)} real episodes under {out_root}.")
    return index


def load_task_records(index: DatasetIndex, channel: str, label: str) -> List[EpisodeRecord]:
    return [read_episode(index.episode_path(e["episode_id"])) for e in index.episodes
            if e["channel"] == channel and e["task"] == label]


def video_report(heldout_sim: DatasetIndex, heldout_real: DatasetIndex,
                 pseudo: Dict[str, DatasetIndex]) -> List[Dict[str, Union[str, float]]]:
    """Realism rows for the sim baseline followed by every pseudo variant.

    Args:
        heldout_sim (DatasetIndex): Held-out sim episodes.
        heldout_real (DatasetIndex): Held-out real episodes (the reference).
        pseudo (dict[str, DatasetIndex]): Pseudo episodes per guidance variant.

    Returns:
        list[dict]: Report rows.

    """
    rows, _ = evaluate_suite(heldout_sim, heldout_real, variant="sim", pred_channel="sim")
    for variant in sorted(pseudo, key=_variant_rank):
        variant_rows, _ = evaluate_suite(pseudo[variant], heldout_real, variant=variant, pred_channel="pseudo")
        rows.extend(variant_rows)
    return rows


def _variant_rank(variant: str) -> Tuple[int, str]:
    return (VIDEO_VARIANT_ORDER.index(variant) if variant in VIDEO_VARIANT_ORDER else len(VIDEO_VARIANT_ORDER),
            variant)


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# REPORT TABLES # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def _write_table(rows: Sequence[Dict[str, str]], columns: Sequence[str], table_file: Path) -> Path:
    with open(table_file, "w", encoding="utf-8", newline="") as csv_file:
        writer = csv.DictWriter(csv_file, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({column: row.get(column, "") for column in columns})
    return table_file


def _success_cells(results: Sequence[Dict[str, str]], suites: Sequence[str]) -> List[Dict[str, str]]:
    cells: Dict[Tuple[str, str], Dict[str, str]] = {}
    totals: Dict[Tuple[str, str], List[int]] = {}
    for row in results:
        if row["suite"] not in suites:
            continue
        key = (row["task"], row["regime"])
        cells.setdefault(key, {"task": row["task"], "regime": row["regime"]})
        if row["successes"] == "absent":
            cells[key][row["suite"]] = "absent"
            continue
        cells[key][row["suite"]] = f"{row['successes']}/{row['trials']}"
        total = totals.setdefault((row["regime"], row["suite"]), [0, 0])
        total[0] += int(row["successes"])
        total[1] += int(row["trials"])
    table = [cells[key] for key in sorted(cells)]
    for regime in sorted({key[1] for key in cells}):
        aggregate = {"task": "ALL", "regime": regime}
        for suite in suites:
            successes, trials = totals.get((regime, suite), [0, 0])
            aggregate[suite] = f"{successes}/{trials}" if trials else ""
        table.append(aggregate)
    return table


def write_tables(report_file: Union[Path, str], results_file: Union[Path, str],
                 out_dir: Union[Path, str]) -> List[Path]:
    """Write the realism table and the policy success tables.

    Args:
        report_file (Path | str): report.csv of the eval-video stage.
        results_file (Path | str): regime_results.csv of the eval-policy stage.
        out_dir (Path | str): Output directory.

    Returns:
        list[Path]: table1.csv (realism per task and variant), table2.csv (in_domain and ood_spatial success per task
        and regime), and table3.csv (ood_object success per task and regime).

    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    realism = read_report_csv(report_file)
    realism_columns = list(realism[0].keys()) if realism else ["task", "variant", "psnr", "ssim"]
    realism = sorted(realism, key=lambda r: (_variant_rank(r["variant"]), r["task"] == "ALL", r["task"]))
    tables = [_write_table(realism, realism_columns, out_dir / "table1.csv")]

    results = read_regime_csv(results_file)
    tables.append(_write_table(_success_cells(results, ["in_domain", "ood_spatial"]),
                               ["task", "regime", "in_domain", "ood_spatial"], out_dir / "table2.csv"))
    tables.append(_write_table(_success_cells(results, ["ood_object"]), ["task", "regime", "ood_object"],
                               out_dir / "table3.csv"))
    logger.info(f"Wrote report tables to {out_dir}.")
    return tables


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# PIPELINE  # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def artifact_hash(cfg: ExperimentConfig) -> str:
    """Configuration hash keying the stage caches (the worker cap and output root do not affect artifacts).
    """
    return config_hash({k: v for k, v in cfg.resolved().items() if k not in ("jobs", "output_root")})


class Pipeline(object):
    """CompSim Pipeline object running stages inside one run directory.
    """

    def __init__(self, run_dir: Union[Path, str], cfg: Optional[ExperimentConfig] = None):
        """Instantiate a pipeline over a run directory.

        Args:
            run_dir (Path | str): Run directory (created when missing).
            cfg (ExperimentConfig, optional): Validated experiment configuration.

        """
        self.run_dir: Path = Path(run_dir)
        self.cfg: ExperimentConfig = resolve_config(cfg)
        self._stages: Dict[str, Callable[[], None]] = {
            "gen-sim": self.gen_sim,
            "gen-real": self.gen_real,
            "calibrate": self.calibrate,
            "train-neuralsim": self.train_neuralsim,
            "synthesize": self.synthesize,
            "eval-video": self.eval_video,
            "train-policy": self.train_policy,
            "eval-policy": self.eval_policy,
            "report": self.report,
        }

    def path(self, relative: str) -> Path:
        return self.run_dir / relative

    @property
    def cache_hash(self) -> str:
        return artifact_hash(self.cfg)

    def _uses(self, source: str) -> bool:
        return any(build_regime(name, self.cfg).counts.get(source, 0) > 0 for name in self.cfg.policy["regimes"])

    def dependencies(self, stage: str) -> List[str]:
        dependencies = {
            "gen-sim": [],
            "gen-real": ["gen-sim"],
            "calibrate": ["gen-real"],
            "train-neuralsim": ["gen-real", "calibrate"],
            "synthesize": ["gen-sim", "train-neuralsim"],
            "eval-video": ["gen-sim", "gen-real", "synthesize"],
            "train-policy": ["gen-sim", "gen-real"] + (["synthesize"] if self._uses("pseudo") else []),
            "eval-policy": ["train-policy"],
            "report": ["eval-video", "eval-policy"],
        }
        return dependencies[stage]

    # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
    # MANIFESTS # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
    # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

    def manifest_path(self, stage: str) -> Path:
        return self.run_dir / "manifests" / f"{stage}.json"

    def read_manifest(self, stage: str) -> Optional[StageManifest]:
        manifest_path = self.manifest_path(stage)
        if not manifest_path.is_file():
            return None
        with open(manifest_path, "r", encoding="utf-8") as manifest_file:
            return StageManifest.from_json(json.load(manifest_file))

    def output_digest(self, stage: str) -> str:
        return tree_digest([self.path(p) for p in STAGE_OUTPUTS[stage]], self.run_dir)

    def require(self, stage: str, required_stage: str) -> str:
        """Check that an upstream stage completed and return the digest of its outputs.

        Args:
            stage (str): Stage about to run.
            required_stage (str): Upstream stage.

        Returns:
            str: Output digest recorded by the upstream stage.

        Raises:
            StageDependencyError: Naming the missing upstream artifact.

        """
        artifact = self.path(STAGE_ARTIFACTS[required_stage])
        manifest = self.read_manifest(required_stage)
        if not artifact.exists() or manifest is None or manifest.status != "complete":
            logger.error(f"Stage {stage} needs {artifact} from stage {required_stage}.")
            raise StageDependencyError(stage, str(artifact), required_stage)
        return manifest.output_digest

    def _write_manifest(self, manifest: StageManifest) -> Path:
        manifest_path = self.manifest_path(manifest.stage)
        manifest_path.parent.mkdir(parents=True, exist_ok=True)
        temporary = manifest_path.with_name(f".{manifest_path.name}.{os.getpid()}.tmp")
        with open(temporary, "w", encoding="utf-8") as manifest_file:
            jsonify_data_to_file(manifest, manifest_file)
        os.replace(temporary, manifest_path)
        return manifest_path

    def is_current(self, stage: str, inputs: Dict[str, str]) -> bool:
        manifest = self.read_manifest(stage)
        return (manifest is not None and manifest.status == "complete" and manifest.config_hash == self.cache_hash
                and manifest.inputs == inputs and manifest.output_digest == self.output_digest(stage))

    def run_stage(self, stage: str) -> StageManifest:
        """Run one stage unless its outputs are already current.

        Args:
            stage (str): Stage name.

        Returns:
            StageManifest: Manifest of the stage.

        Raises:
            StageDependencyError: When an upstream stage has not completed.

        """
        if stage not in self._stages:
            raise StageDependencyError(stage, f"unknown stage (expected one of {list(STAGES)})")
        inputs = {dependency: self.require(stage, dependency) for dependency in self.dependencies(stage)}
        if self.is_current(stage, inputs):
            logger.info(f"Stage {stage} is up to date; skipping.")
            return self.read_manifest(stage)

        for relative in STAGE_OUTPUTS[stage]:
            output = self.path(relative)
            if output.is_dir():
                shutil.rmtree(output)
            elif output.exists():
                output.unlink()
        self._write_manifest(StageManifest({"stage": stage, "status": "running", "config_hash": self.cache_hash,
                                            "seed": self.cfg.seed, "inputs": inputs}))
        logger.info(f"Running stage {stage} in {self.run_dir}.")
        self._stages[stage]()
        manifest = StageManifest({
            "stage": stage, "status": "complete", "config_hash": self.cache_hash, "seed": self.cfg.seed,
            "inputs": inputs, "outputs": list(STAGE_OUTPUTS[stage]), "output_digest": self.output_digest(stage),
            "config": self.cfg.resolved()
        })
        self._write_manifest(manifest)
        logger.info(f"Stage {stage} complete.")
        return manifest

    def run(self, stages: Optional[Sequence[str]] = None) -> Path:
        """Run the requested stages (all by default) in pipeline order.

        Args:
            stages (Sequence[str], optional): Stage names.

        Returns:
            Path: The run directory.

        """
        requested = list(STAGES) if not stages else list(stages)
        unknown = [s for s in requested if s not in STAGES]
        if unknown:
            raise StageDependencyError(unknown[0], f"unknown stage (expected one of {list(STAGES)})")
        self.run_dir.mkdir(parents=True, exist_ok=True)
        for stage in [s for s in STAGES if s in requested]:
            self.run_stage(stage)
        return self.run_dir

    # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
    # STAGES  # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
    # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

    def dataset_plans(self) -> Dict[str, List[Tuple[TaskSpec, int]]]:
        """Episodes of the train, heldout, and policy sim datasets.

        Returns:
            dict[str, list[tuple[TaskSpec, int]]]: (task, seed) pairs per dataset.

        """
        tasks = self.cfg.tasks
        plans = {
            "train": [(TaskSpec.from_label(label), i)
                      for label in tasks["train"] for i in range(tasks["train_episodes"])],
            "heldout": [(TaskSpec.from_label(label), tasks["heldout_seed_offset"] + i)
                        for label in tasks["heldout"] for i in range(tasks["heldout_episodes"])],
            "policy": [],
        }
        if self._uses("sim") or self._uses("pseudo"):
            plans["policy"] = [(policy_sim_task(label, i), tasks["policy_seed_offset"] + i)
                               for label in tasks["policy"] for i in range(tasks["policy_sim_episodes"])]
        return plans

    def gen_sim(self) -> None:
        for name, plan in self.dataset_plans().items():
            generate_sim_dataset(plan, self.path(f"episodes/sim/{name}"), self.cfg)

    def gen_real(self) -> None:
        for name in ("train", "heldout"):
            generate_real_dataset(self.path(f"episodes/sim/{name}"), self.path(f"episodes/real/{name}"), self.cfg)

    def calibrate(self) -> None:
        """Recover the rig camera from the calibration target, then check every training pair against it.

        The sim channel is re-projected through the recovered camera while the real channel keeps the rig camera, so
        the centroid check measures the residual Real2Sim misalignment.

        Raises:
            DatasetValidationError: When any training pair is misaligned.

        """
        camera, _ = calibrate_rig(self.cfg, out_file=self.path("calibration/camera.json"))
        sim_index, real_index = load_index(self.path("episodes/sim/train")), load_index(self.path(
            "episodes/real/train"))
        real_by_key = real_index.by_pair_key("real")
        reports = []
        for pair_key, sim_id in sorted(sim_index.by_pair_key("sim").items()):
            if pair_key not in real_by_key:
                continue
            sim = read_episode(sim_index.episode_path(sim_id))
            sim.camera = camera
            pair = PairedEpisode({"sim": sim, "real": read_episode(real_index.episode_path(real_by_key[pair_key]))})
            reports.append(validate_alignment(pair, self.cfg))
        failures = [r for r in reports if not r.ok]
        with open(self.path("calibration/alignment.json"), "w", encoding="utf-8") as alignment_file:
            jsonify_data_to_file({"pairs": len(reports), "misaligned": failures}, alignment_file)
        if failures:
            logger.error(f"{len(failures)} of {len(reports)} training pairs are misaligned.")
            raise DatasetValidationError(f"{len(failures)} training pair(s) are misaligned, first "
                                         f"{failures[0].pair_key}: {sorted(set(failures[0].kinds()))}",
                                         field="alignment", path=str(self.path("calibration/alignment.json")))
        logger.info(f"All {len(reports)} training pairs are aligned under the recovered camera.")

    def train_neuralsim(self) -> None:
        pairs = load_pairs(load_index(self.path("episodes/sim/train")), load_index(self.path("episodes/real/train")))
        params, report = train(pairs, self.cfg, checkpoint_dir=last_finite_dir(self.path("model")))
        params.save(self.path("model"))
        if report.val_psnr:
            logger.info(f"Neural simulator trained: epoch {report.best_epoch} kept, validation PSNR "
                        f"{report.val_psnr[report.best_epoch - 1]:.3f} dB.")

    def synthesize(self) -> None:
        params = NeuralSimParams.load(self.path("model"))
        heldout = load_index(self.path("episodes/sim/heldout"))
        for variant in sorted(self.cfg.neuralsim["variants"], key=_variant_rank):
            synthesize_dataset(params, heldout, self.cfg.guidance(variant), self.cfg,
                               self.path(f"pseudo/heldout_{variant}"), variant)
        if self._uses("pseudo"):
            variant = self.cfg.policy["pseudo_variant"]
            synthesize_dataset(params, load_index(self.path("episodes/sim/policy")), self.cfg.guidance(variant),
                               self.cfg, self.path("pseudo/policy"), variant)

    def eval_video(self) -> None:
        pseudo = {variant: load_index(self.path(f"pseudo/heldout_{variant}")) for variant in
                  self.cfg.neuralsim["variants"]}
        rows = video_report(load_index(self.path("episodes/sim/heldout")),
                            load_index(self.path("episodes/real/heldout")), pseudo)
        write_report_csv(rows, self.path("report.csv"))

    def train_policy(self) -> None:
        indices = {
            "real": load_index(self.path("episodes/real/train")),
            "sim": load_index(self.path("episodes/sim/policy")),
            "pseudo": load_index(self.path("pseudo/policy")) if self._uses("pseudo") else None,
        }
        regimes = [build_regime(name, self.cfg) for name in self.cfg.policy["regimes"]]
        for label in self.cfg.tasks["policy"]:
            sources = sorted({source for regime in regimes for source in regime.counts})
            episodes = {source: load_task_records(indices[source], source, label) for source in sources}
            for regime in regimes:
                params = train_policy(regime, episodes, self.cfg, seed=derive_seed("policy", self.cfg.seed, label))
                params.save(self.path(f"policies/{regime.name}/{label}"))

    def eval_policy(self) -> None:
        policies = {}
        for name in self.cfg.policy["regimes"]:
            policies[name] = {}
            for label in self.cfg.tasks["policy"]:
                directory = self.path(f"policies/{name}/{label}")
                policies[name][label] = PolicyParams.load(directory) if directory.is_dir() else None
        rows = evaluate_regimes(policies, build_suites(self.cfg), self.cfg.tasks["policy"], self.cfg)
        write_regime_csv(rows, self.path("regime_results.csv"))

    def report(self) -> None:
        write_tables(self.path("report.csv"), self.path("regime_results.csv"), self.path("tables"))


def run_pipeline(cfg: Optional[ExperimentConfig] = None, stages: Optional[Sequence[str]] = None,
                 run_dir: Union[Path, str, None] = None) -> Path:
    """Run the requested stages of the real-sim-real loop.

    Args:
        cfg (ExperimentConfig, optional): Validated experiment configuration.
        stages (Sequence[str], optional): Stage names (all stages by default).
        run_dir (Path | str, optional): Run directory (``<output_root>/run-<config hash prefix>`` by default).

    Returns:
        Path: The run directory.

    """
    cfg = resolve_config(cfg)
    pipeline = Pipeline(run_dir or Path(cfg.output_root) / f"run-{artifact_hash(cfg)[:12]}", cfg)
    return pipeline.run(stages)
