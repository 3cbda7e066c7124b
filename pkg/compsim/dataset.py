# -*- coding: utf-8 -*-
"""CompSim module for episode persistence, pairing, alignment checks, and data mixtures.

Every episode lives in its own directory under a dataset root::

    <root>/<episode_id>/manifest.json
    <root>/<episode_id>/frames/f_00000.png
    <root>/<episode_id>/actions.csv
    <root>/<episode_id>/states.csv
    <root>/index.json

Example:
    Write a paired episode and read it back::

        store = EpisodeStore("runs/demo/episodes/train")
        pair = generate_paired_episode(TaskSpec.from_label("shake_bottle"), seed=0, cfg=cfg)
        store.write(pair.sim)
        store.write(pair.real)
        assert store.read(pair.sim.episode_id) == pair.sim

Attributes:
    logger (Logger): Module level logger for usage and debugging.
    SCHEMA_VERSION (int): Version of the on-disk episode layout.
    FRAME_PATTERN (str): Frame file pattern relative to the episode directory.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import csv
import io
import json
import os
import shutil
import threading
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from compsim.blockworld import object_pixel_centroids
from compsim.config import ExperimentConfig, resolve_config
from compsim.exceptions import DatasetValidationError, EpisodeCollisionError, MixtureError
from compsim.logger import get_logger
from compsim.models import (
    AlignmentReport, CameraModel, DatasetIndex, EpisodeRecord, LowLevelAction, MixtureSpec, ObjectInstance,
    PairedEpisode, TaskSpec, WorldState, require_channel
)
from compsim.utils import canonical_json, config_hash, format_float9, jsonify_data_to_file, sha256_bytes

logger = get_logger(__name__)

SCHEMA_VERSION = 1
FRAME_PATTERN = "frames/f_%05d.png"
ACTION_HEADER = ["step", "dx", "dy", "dz", "gripper_cmd"]
STATE_HEADER = ["step", "gx", "gy", "gz", "gripper_open", "held_object", "handover_object"]
MANIFEST_FIELDS = (
    "episode_id", "task", "seed", "channel", "num_steps", "action_dim", "frame_pattern", "camera_file", "checksum"
)
INDEX_FILE = "index.json"

_index_lock = threading.Lock()


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# CSV CODECS  # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def actions_to_csv(actions: Sequence[LowLevelAction]) -> bytes:
    """Encode actions as actions.csv bytes (floats with 9 significant digits).

    Args:
        actions (Sequence[LowLevelAction]): Actions.

    Returns:
        bytes: UTF-8 CSV content.

    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(ACTION_HEADER)
    for index, action in enumerate(actions):
        writer.writerow([index, format_float9(action.dx), format_float9(action.dy), format_float9(action.dz),
                         action.gripper_cmd])
    return buffer.getvalue().encode("utf-8")


def actions_from_csv(content: bytes) -> List[LowLevelAction]:
    rows = list(csv.reader(io.StringIO(content.decode("utf-8"))))
    if not rows or rows[0] != ACTION_HEADER:
        raise DatasetValidationError(f"actions.csv header must be {','.join(ACTION_HEADER)}", field="actions")
    actions = []
    for index, row in enumerate(rows[1:]):
        try:
            if len(row) != 5 or int(row[0]) != index:
                raise ValueError(f"malformed row {index}")
            actions.append(LowLevelAction({"dx": float(row[1]), "dy": float(row[2]), "dz": float(row[3]),
                                           "gripper_cmd": row[4]}))
        except ValueError as err:
            raise DatasetValidationError(f"actions.csv row {index}: {err}", field="actions")
    return actions


def _state_header(object_ids: Sequence[str]) -> List[str]:
    return STATE_HEADER + [f"{object_id}_{axis}" for object_id in object_ids for axis in ("x", "y", "z", "yaw")]


def states_to_csv(states: Sequence[WorldState]) -> bytes:
    """Encode a state trace as states.csv bytes (floats in their shortest exact form).

    Args:
        states (Sequence[WorldState]): State trace; every state holds the same objects in the same order.

    Returns:
        bytes: UTF-8 CSV content.

    """
    object_ids = states[0].object_ids() if states else []
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(_state_header(object_ids))
    for state in states:
        row = [state.step_index] + [repr(float(v)) for v in state.gripper_pose] + [
            int(state.gripper_open), state.held_object or "", state.handover_object or ""]
        for obj in state.objects:
            row.extend(repr(float(v)) for v in obj.pose)
        writer.writerow(row)
    return buffer.getvalue().encode("utf-8")


def states_from_csv(content: bytes, objects: Sequence[Dict[str, Any]], receiver_pose: Optional[Sequence[float]],
                    background: str) -> List[WorldState]:
    rows = list(csv.reader(io.StringIO(content.decode("utf-8"))))
    header = _state_header([obj["id"] for obj in objects])
    if not rows or rows[0] != header:
        raise DatasetValidationError("states.csv header does not match the manifest objects", field="states")
    states = []
    for row in rows[1:]:
        if len(row) != len(header):
            raise DatasetValidationError(f"states.csv row {len(states)} has {len(row)} fields, expected {len(header)}.",
                                         field="states")
        try:
            poses = [tuple(float(v) for v in row[7 + 4 * i:11 + 4 * i]) for i in range(len(objects))]
            states.append(WorldState({
                "step_index": int(row[0]),
                "gripper_pose": (float(row[1]), float(row[2]), float(row[3])),
                "gripper_open": row[4] == "1",
                "held_object": row[5] or None,
                "handover_object": row[6] or None,
                "objects": [ObjectInstance(dict(obj, pose=pose)) for obj, pose in zip(objects, poses)],
                "receiver_pose": receiver_pose,
                "background": background,
            }))
        except (ValueError, IndexError) as err:
            raise DatasetValidationError(f"states.csv row {len(states)}: {err}", field="states")
    return states


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# EPISODES  # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def _manifest(record: EpisodeRecord, checksum: str) -> Dict[str, Any]:
    initial = record.states[0] if record.states else None
    return {
        "schema_version": SCHEMA_VERSION,
        "episode_id": record.episode_id,
        "pair_key": record.pair_key,
        "task": record.task.serialized(),
        "seed": record.seed,
        "channel": record.channel,
        "num_steps": record.num_steps,
        "action_dim": len(ACTION_HEADER) - 1,
        "frame_pattern": FRAME_PATTERN,
        "resolution": [int(record.frames.shape[2]), int(record.frames.shape[1])],
        "camera_file": record.camera_file,
        "camera": record.camera.serialized() if record.camera is not None else None,
        "checksum": checksum,
        "objects": [
            {"id": obj.id, "shape": obj.shape, "color": list(obj.color), "size": list(obj.size)}
            for obj in (initial.objects if initial else [])
        ],
        "receiver_pose": list(initial.receiver_pose) if initial and initial.receiver_pose else None,
        "background": initial.background if initial else record.task.background_variant,
        "provenance": record.provenance,
    }


def _index_entry(record_or_manifest: Union[EpisodeRecord, Dict[str, Any]]) -> Dict[str, Any]:
    if isinstance(record_or_manifest, EpisodeRecord):
        return {"episode_id": record_or_manifest.episode_id, "channel": record_or_manifest.channel,
                "pair_key": record_or_manifest.pair_key, "task": record_or_manifest.task.label}
    manifest = record_or_manifest
    return {"episode_id": manifest["episode_id"], "channel": manifest["channel"], "pair_key": manifest["pair_key"],
            "task": TaskSpec(manifest["task"]).label}


def _write_index(root: Path, entries: List[Dict[str, Any]]) -> DatasetIndex:
    entries = sorted(entries, key=lambda e: e["episode_id"])
    index = DatasetIndex({"root": str(root), "episodes": entries, "digest": config_hash(entries)})
    temporary = root / f".{INDEX_FILE}.{os.getpid()}.{threading.get_ident()}.tmp"
    with open(temporary, "w", encoding="utf-8") as index_file:
        jsonify_data_to_file({"schema_version": SCHEMA_VERSION, "episodes": entries, "digest": index.digest},
                             index_file)
    os.replace(temporary, root / INDEX_FILE)
    return index


def write_episode(record: EpisodeRecord, root: Union[Path, str]) -> Path:
    """Write an episode directory and register it in the root's index.json.

    The episode is written to a temporary directory and renamed into place, so readers never see partial episodes.

    Args:
        record (EpisodeRecord): Episode to write.
        root (Path | str): Dataset root.

    Returns:
        Path: Episode directory.

    Raises:
        DatasetValidationError: When the record violates its invariants.
        EpisodeCollisionError: When the episode id already exists under root.

    """
    record.validate()
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    episode_dir = root / record.episode_id
    if episode_dir.exists():
        raise EpisodeCollisionError(f"Episode {record.episode_id} already exists.", path=str(episode_dir))

    staging = root / f".{record.episode_id}.{os.getpid()}.{threading.get_ident()}.tmp"
    if staging.exists():
        shutil.rmtree(staging)
    (staging / "frames").mkdir(parents=True)
    try:
        actions_csv = actions_to_csv(record.actions)
        (staging / "actions.csv").write_bytes(actions_csv)
        (staging / "states.csv").write_bytes(states_to_csv(record.states))
        for index, frame in enumerate(record.frames):
            Image.fromarray(np.ascontiguousarray(frame)).save(staging / (FRAME_PATTERN % index), format="PNG")
        with open(staging / "manifest.json", "w", encoding="utf-8") as manifest_file:
            jsonify_data_to_file(_manifest(record, sha256_bytes(actions_csv)), manifest_file)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    try:
        os.rename(staging, episode_dir)
    except OSError:
        shutil.rmtree(staging, ignore_errors=True)
        raise EpisodeCollisionError(f"Episode {record.episode_id} already exists.", path=str(episode_dir))

    with _index_lock:
        current = _read_index_entries(root)
        current = [e for e in current if e["episode_id"] != record.episode_id] + [_index_entry(record)]
        _write_index(root, current)
    logger.debug(f"Wrote episode {record.episode_id} ({record.num_steps} steps) to {episode_dir}.")
    return episode_dir


def read_episode(path: Union[Path, str]) -> EpisodeRecord:
    """Read and fully validate an episode directory.

    Args:
        path (Path | str): Episode directory.

    Returns:
        EpisodeRecord: Validated record.

    Raises:
        DatasetValidationError: Naming the manifest field or file that does not match the schema.

    """
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise DatasetValidationError(f"No manifest.json in {path}", field="manifest", path=str(path))
    with open(manifest_path, "r", encoding="utf-8") as manifest_file:
        try:
            manifest = json.load(manifest_file)
        except json.JSONDecodeError as err:
            raise DatasetValidationError(f"manifest.json is not valid JSON: {err}", field="manifest",
                                         path=str(path))
    for field in MANIFEST_FIELDS:
        if field not in manifest:
            raise DatasetValidationError(f"manifest.json of {path.name} is missing a field", field=field,
                                         path=str(path))
    require_channel(manifest["channel"])

    actions_csv = (path / "actions.csv").read_bytes() if (path / "actions.csv").is_file() else b""
    if sha256_bytes(actions_csv) != manifest["checksum"]:
        raise DatasetValidationError(f"actions.csv of {path.name} does not match its checksum", field="checksum",
                                     path=str(path))
    actions = actions_from_csv(actions_csv)
    if manifest["num_steps"] != len(actions):
        raise DatasetValidationError(
            f"manifest num_steps={manifest['num_steps']} but actions.csv has {len(actions)} rows", field="num_steps",
            path=str(path))

    frame_files = sorted((path / "frames").glob("f_*.png"))
    if len(frame_files) != len(actions) + 1:
        raise DatasetValidationError(
            f"{path.name} has {len(frame_files)} frames for {len(actions)} actions", field="frames", path=str(path))
    frames = []
    for index in range(len(frame_files)):
        frame_path = path / (manifest["frame_pattern"] % index)
        if not frame_path.is_file():
            raise DatasetValidationError(f"Missing frame {frame_path.name}", field="frames", path=str(path))
        with Image.open(frame_path) as image:
            frames.append(np.asarray(image.convert("RGB"), dtype=np.uint8))

    states = states_from_csv((path / "states.csv").read_bytes() if (path / "states.csv").is_file() else b"",
                             manifest.get("objects", []), manifest.get("receiver_pose"),
                             manifest.get("background", "default"))
    record = EpisodeRecord({
        "episode_id": manifest["episode_id"], "task": manifest["task"], "seed": manifest["seed"],
        "channel": manifest["channel"], "frames": np.stack(frames), "actions": actions, "states": states,
        "camera": manifest.get("camera"), "camera_file": manifest["camera_file"],
        "provenance": manifest.get("provenance", {})
    })
    record.validate()
    return record


def _read_index_entries(root: Path) -> List[Dict[str, Any]]:
    index_path = root / INDEX_FILE
    if not index_path.is_file():
        return []
    with open(index_path, "r", encoding="utf-8") as index_file:
        return list(json.load(index_file).get("episodes", []))


def load_index(root: Union[Path, str]) -> DatasetIndex:
    """Read the index.json of a dataset root (an empty index when there is none).

    Args:
        root (Path | str): Dataset root.

    Returns:
        DatasetIndex: Index.

    """
    root = Path(root)
    entries = _read_index_entries(root)
    return DatasetIndex({"root": str(root), "episodes": entries, "digest": config_hash(
        sorted(entries, key=lambda e: e["episode_id"]))})


def consolidate_index(root: Union[Path, str]) -> DatasetIndex:
    """Rebuild index.json from the episode manifests found under root.

    Args:
        root (Path | str): Dataset root.

    Returns:
        DatasetIndex: Consolidated index.

    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for manifest_path in sorted(root.glob("*/manifest.json")):
        if manifest_path.parent.name.startswith("."):
            continue
        with open(manifest_path, "r", encoding="utf-8") as manifest_file:
            entries.append(_index_entry(json.load(manifest_file)))
    with _index_lock:
        return _write_index(root, entries)


class EpisodeStore(object):
    """CompSim EpisodeStore object for writing, reading, and indexing the episodes under one dataset root.
    """

    def __init__(self, root: Union[Path, str]):
        """Instantiate an episode store.

        Args:
            root (Path | str): Dataset root directory (created on first write).

        """
        self.root: Path = Path(root)

    def __contains__(self, episode_id: str) -> bool:
        return (self.root / episode_id / "manifest.json").is_file()

    def write(self, record: EpisodeRecord) -> Path:
        return write_episode(record, self.root)

    def read(self, episode_id: str) -> EpisodeRecord:
        return read_episode(self.root / episode_id)

    def index(self) -> DatasetIndex:
        return load_index(self.root)

    def consolidate(self) -> DatasetIndex:
        return consolidate_index(self.root)

    def records(self, channel: Optional[str] = None) -> Iterator[EpisodeRecord]:
        for episode_id in self.index().ids(channel):
            yield self.read(episode_id)

    def verify(self) -> DatasetIndex:
        """Read every indexed episode, which validates its schema and checksum.

        Returns:
            DatasetIndex: The verified index.

        """
        index = self.index()
        for episode_id in index.ids():
            self.read(episode_id)
        logger.info(f"Verified {len(index)} episodes under {self.root}.")
        return index


def load_pairs(index: DatasetIndex, real_index: Optional[DatasetIndex] = None) -> List[PairedEpisode]:
    """Pair sim and real episodes by pair key.

    Args:
        index (DatasetIndex): Index holding the sim episodes (and the real ones when real_index is not given).
        real_index (DatasetIndex, optional): Index holding the real episodes, for datasets kept under separate roots.

    Returns:
        list[PairedEpisode]: Pairs sorted by pair key.

    """
    real_index = real_index or index
    sim, real = index.by_pair_key("sim"), real_index.by_pair_key("real")
    pairs = []
    for pair_key in sorted(set(sim) & set(real)):
        pairs.append(PairedEpisode({
            "sim": read_episode(index.episode_path(sim[pair_key])),
            "real": read_episode(real_index.episode_path(real[pair_key]))
        }))
    unmatched = sorted(set(sim) ^ set(real))
    if unmatched:
        logger.warning(f"{len(unmatched)} episode(s) under {index.root} have no counterpart channel: {unmatched[:5]}")
    return pairs


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# ALIGNMENT AND MIXTURES  # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def validate_alignment(pair: PairedEpisode, cfg: Optional[ExperimentConfig] = None,
                       camera: Optional[CameraModel] = None, tolerance_px: float = 1.0) -> AlignmentReport:
    """Check that the two channels of a pair are aligned action by action and frame by frame.

    Object centroids are projected from each record's state trace rather than segmented from its frames: both
    channels render those states, and the real channel recolors objects, so the states are the geometry of record.
    Identical states seen through identical cameras agree by construction and are not re-projected.

    Args:
        pair (PairedEpisode): Pair to check.
        cfg (ExperimentConfig, optional): Experiment configuration.
        camera (CameraModel, optional): Camera for centroid checks (each record's own camera by default).
        tolerance_px (float): Largest allowed object centroid disagreement in pixels.

    Returns:
        AlignmentReport: Report listing every violation (empty when aligned).

    """
    cfg = resolve_config(cfg)
    violations: List[Dict[str, Any]] = []
    first, second = pair.sim, pair.real

    for index in range(max(len(first.actions), len(second.actions))):
        a = first.actions[index] if index < len(first.actions) else None
        b = second.actions[index] if index < len(second.actions) else None
        if a is None or b is None or a != b:
            violations.append({"kind": "action_mismatch", "index": index})

    if len(first.frames) != len(second.frames):
        violations.append({"kind": "frame_count", first.channel: len(first.frames),
                           second.channel: len(second.frames)})

    first_camera = camera or first.camera or cfg.camera_model()
    second_camera = camera or second.camera or cfg.camera_model()
    for index in range(min(len(first.states), len(second.states))):
        if first.states[index] == second.states[index] and first_camera == second_camera:
            continue
        a = object_pixel_centroids(first.states[index], first_camera, cfg)
        b = object_pixel_centroids(second.states[index], second_camera, cfg)
        for object_id in sorted(set(a) | set(b)):
            if object_id not in a or object_id not in b:
                violations.append({"kind": "centroid", "index": index, "object": object_id, "offset": None})
                continue
            offset = float(np.hypot(a[object_id][0] - b[object_id][0], a[object_id][1] - b[object_id][1]))
            if offset > tolerance_px:
                violations.append({"kind": "centroid", "index": index, "object": object_id, "offset": offset})

    report = AlignmentReport({"pair_key": pair.pair_key, "violations": violations})
    if not report.ok:
        logger.warning(f"Pair {pair.pair_key} has {len(violations)} alignment violation(s): "
                       f"{sorted(set(report.kinds()))}")
    return report


def build_mixture(spec: MixtureSpec, n_draws: int) -> List[Tuple[str, str]]:
    """Draw a reproducible stream of episode references from a real/synthetic mixture.

    Each draw is real with probability alpha and synthetic otherwise, uniform within the chosen set.

    Args:
        spec (MixtureSpec): Mixture.
        n_draws (int): Number of draws.

    Returns:
        list[tuple[str, str]]: (channel, episode_id) per draw.

    Raises:
        MixtureError: When alpha is outside [0, 1] or a set with positive weight is empty.

    """
    if not 0.0 <= spec.alpha <= 1.0:
        raise MixtureError(f"Mixture alpha={spec.alpha} must lie in [0, 1].")
    if spec.alpha > 0 and not spec.real_set:
        raise MixtureError("Mixture gives the real set positive weight but it is empty.")
    if spec.alpha < 1 and not spec.pseudo_set:
        raise MixtureError(f"Mixture gives the {spec.synthetic_channel} set positive weight but it is empty.")
    rng = np.random.default_rng(spec.seed)
    draws = []
    for _ in range(int(n_draws)):
        if rng.random() < spec.alpha:
            draws.append(("real", spec.real_set[int(rng.integers(len(spec.real_set)))]))
        else:
            draws.append((spec.synthetic_channel, spec.pseudo_set[int(rng.integers(len(spec.pseudo_set)))]))
    return draws


def mixture_digest(draws: Sequence[Tuple[str, str]]) -> str:
    return sha256_bytes(canonical_json([list(d) for d in draws]).encode("utf-8"))
