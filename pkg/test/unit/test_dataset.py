# -*- coding: utf-8 -*-
"""Pytest unit tests for CompSim dataset module.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import json

import numpy as np
import pytest

from compsim import dataset
from compsim.dataset import (
    EpisodeStore, INDEX_FILE, build_mixture, consolidate_index, load_index, load_pairs, mixture_digest, read_episode,
    validate_alignment, write_episode
)
from compsim.exceptions import DatasetValidationError, EpisodeCollisionError, MixtureError
from compsim.models import CameraModel, EpisodeRecord, MixtureSpec, PairedEpisode


def _action_rows(record):
    return np.array([[a.dx, a.dy, a.dz] for a in record.actions])


@pytest.mark.unit
def test_write_then_read_episode(tmp_path, card_pair):
    """Unit test for persisting an episode and reading it back.

    Note:
        Tests :func:`~compsim.dataset.write_episode` and :func:`~compsim.dataset.read_episode`.

    Returns:
        None

    """
    sim = card_pair.sim
    episode_dir = write_episode(sim, tmp_path / "sim")
    assert episode_dir.name == sim.episode_id
    assert (episode_dir / "frames" / "f_00000.png").is_file()

    loaded = read_episode(episode_dir)
    assert loaded.episode_id == sim.episode_id
    assert loaded.task == sim.task
    assert loaded.channel == "sim"
    assert loaded.camera == sim.camera
    assert np.array_equal(loaded.frames, sim.frames)
    assert np.allclose(_action_rows(loaded), _action_rows(sim), atol=1e-9)
    assert [a.gripper_cmd for a in loaded.actions] == [a.gripper_cmd for a in sim.actions]
    assert len(loaded.states) == len(sim.states)
    assert np.allclose(loaded.states[-1].gripper_pose, sim.states[-1].gripper_pose)
    assert loaded.states[-1].object_ids() == sim.states[-1].object_ids()


@pytest.mark.unit
def test_write_episode_collision(tmp_path, card_pair):
    """Unit test for refusing to overwrite an existing episode id.

    Note:
        Tests :func:`~compsim.dataset.write_episode`.

    Returns:
        None

    """
    write_episode(card_pair.sim, tmp_path)
    with pytest.raises(EpisodeCollisionError):
        write_episode(card_pair.sim, tmp_path)
    assert load_index(tmp_path).ids() == [card_pair.sim.episode_id]


@pytest.mark.unit
def test_write_episode_rejects_invalid_record(tmp_path, card_pair):
    """Unit test for validating a record before it is written.

    Note:
        Tests :meth:`~compsim.models.EpisodeRecord.validate`.

    Returns:
        None

    """
    sim = card_pair.sim
    truncated = EpisodeRecord({"task": sim.task, "seed": sim.seed, "channel": "sim", "frames": sim.frames[:-1],
                               "actions": sim.actions, "camera": sim.camera})
    with pytest.raises(DatasetValidationError) as err:
        write_episode(truncated, tmp_path)
    assert err.value.field == "num_steps"

    mislabeled = sim.with_channel("real", sim.frames, {"renderer": "blockworld"})
    with pytest.raises(DatasetValidationError) as err:
        write_episode(mislabeled, tmp_path)
    assert err.value.field == "channel"
    assert not (tmp_path / mislabeled.episode_id).exists()


@pytest.mark.unit
def test_read_episode_tampered_actions(tmp_path, card_pair):
    """Unit test for detecting an actions.csv that no longer matches its checksum.

    Note:
        Tests :func:`~compsim.dataset.read_episode`.

    Returns:
        None

    """
    episode_dir = write_episode(card_pair.sim, tmp_path)
    actions_csv = episode_dir / "actions.csv"
    actions_csv.write_bytes(actions_csv.read_bytes().replace(b",", b";", 1))

    with pytest.raises(DatasetValidationError) as err:
        read_episode(episode_dir)
    assert err.value.field == "checksum"


@pytest.mark.unit
def test_read_episode_missing_manifest_field(tmp_path, card_pair):
    """Unit test for naming the manifest field that is missing.

    Note:
        Tests :func:`~compsim.dataset.read_episode`.

    Returns:
        None

    """
    episode_dir = write_episode(card_pair.sim, tmp_path)
    manifest_path = episode_dir / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    del manifest["num_steps"]
    manifest_path.write_text(json.dumps(manifest))

    with pytest.raises(DatasetValidationError) as err:
        read_episode(episode_dir)
    assert err.value.field == "num_steps"
    assert "num_steps" in str(err.value)


@pytest.mark.unit
def test_read_episode_short_states_row(tmp_path, card_pair):
    """Unit test for a states.csv row that lost its last field.

    Note:
        Tests :func:`~compsim.dataset.read_episode`.

    Returns:
        None

    """
    episode_dir = write_episode(card_pair.sim, tmp_path)
    states_csv = episode_dir / "states.csv"
    lines = states_csv.read_text().splitlines()
    lines[-1] = lines[-1].rsplit(",", 1)[0]
    states_csv.write_text("\n".join(lines) + "\n")

    with pytest.raises(DatasetValidationError) as err:
        read_episode(episode_dir)
    assert err.value.field == "states"


@pytest.mark.unit
def test_write_episode_failure_leaves_no_staging(tmp_path, card_pair, monkeypatch):
    """Unit test for removing the staging directory when an episode write fails.

    Note:
        Tests :func:`~compsim.dataset.write_episode`.

    Returns:
        None

    """
    def broken_states(states):
        raise OSError("disk full")

    monkeypatch.setattr(dataset, "states_to_csv", broken_states)
    with pytest.raises(OSError):
        write_episode(card_pair.sim, tmp_path)
    assert list(tmp_path.iterdir()) == []

    monkeypatch.undo()
    assert read_episode(write_episode(card_pair.sim, tmp_path)).episode_id == card_pair.sim.episode_id


@pytest.mark.unit
def test_read_episode_missing_frame(tmp_path, card_pair):
    """Unit test for an episode whose frame count no longer matches its actions.

    Note:
        Tests :func:`~compsim.dataset.read_episode`.

    Returns:
        None

    """
    episode_dir = write_episode(card_pair.sim, tmp_path)
    sorted((episode_dir / "frames").glob("f_*.png"))[-1].unlink()

    with pytest.raises(DatasetValidationError) as err:
        read_episode(episode_dir)
    assert err.value.field == "frames"

    with pytest.raises(DatasetValidationError) as err:
        read_episode(tmp_path / "does-not-exist")
    assert err.value.field == "manifest"


@pytest.mark.unit
def test_episode_store_and_consolidate_index(tmp_path, card_pair):
    """Unit test for the episode store and rebuilding a lost index.

    Note:
        Tests :class:`~compsim.dataset.EpisodeStore` and :func:`~compsim.dataset.consolidate_index`.

    Returns:
        None

    """
    store = EpisodeStore(tmp_path / "store")
    assert not (tmp_path / "store").exists()

    store.write(card_pair.sim)
    store.write(card_pair.real)
    assert card_pair.real.episode_id in store
    assert store.index().ids("real") == [card_pair.real.episode_id]
    assert [r.channel for r in store.records()] == ["real", "sim"]

    before = store.verify()
    (tmp_path / "store" / INDEX_FILE).unlink()
    assert len(store.index()) == 0

    rebuilt = consolidate_index(tmp_path / "store")
    assert rebuilt.episodes == before.episodes
    assert rebuilt.digest == before.digest
    assert rebuilt.by_pair_key("sim") == {card_pair.pair_key: card_pair.sim.episode_id}


@pytest.mark.unit
def test_load_pairs_across_roots(tmp_path, card_pair):
    """Unit test for pairing sim and real episodes kept under separate roots.

    Note:
        Tests :func:`~compsim.dataset.load_pairs`.

    Returns:
        None

    """
    write_episode(card_pair.sim, tmp_path / "sim")
    write_episode(card_pair.real, tmp_path / "real")

    pairs = load_pairs(load_index(tmp_path / "sim"), load_index(tmp_path / "real"))
    assert len(pairs) == 1
    assert pairs[0].pair_key == card_pair.pair_key
    assert np.array_equal(pairs[0].real.frames, card_pair.real.frames)

    assert load_pairs(load_index(tmp_path / "sim")) == []


@pytest.mark.unit
def test_validate_alignment_violations(card_pair, cfg):
    """Unit test for reporting action, frame count, and centroid disagreements.

    Note:
        Tests :func:`~compsim.dataset.validate_alignment`.

    Returns:
        None

    """
    real = card_pair.real
    shortened = EpisodeRecord({
        "task": real.task, "seed": real.seed, "channel": "real", "frames": real.frames[:-1],
        "actions": real.actions[:-1], "states": real.states[:-1], "camera": real.camera
    })
    report = validate_alignment(PairedEpisode({"sim": card_pair.sim, "real": shortened}), cfg)
    assert not report.ok
    assert report.violations[0] == {"kind": "action_mismatch", "index": len(real.actions) - 1}
    assert "frame_count" in report.kinds()

    shifted = CameraModel(dict(real.camera.serialized(), t=[-0.25, 0.3, 1.0]))
    moved = real.with_channel("real", real.frames, real.provenance)
    moved.camera = shifted
    report = validate_alignment(PairedEpisode({"sim": card_pair.sim, "real": moved}), cfg)
    assert set(report.kinds()) == {"centroid"}
    assert all(v["offset"] is None or v["offset"] > 1.0 for v in report.violations)

    assert validate_alignment(PairedEpisode({"sim": card_pair.sim, "real": moved}), cfg, camera=shifted).ok


@pytest.mark.unit
def test_build_mixture_fraction():
    """Unit test for the real fraction of a balanced mixture.

    Note:
        Tests :func:`~compsim.dataset.build_mixture`.

    Returns:
        None

    """
    spec = MixtureSpec({"alpha": 0.5, "real_set": [f"r{i}" for i in range(10)],
                        "pseudo_set": [f"p{i}" for i in range(200)], "seed": 3})
    draws = build_mixture(spec, 10000)
    real_fraction = sum(1 for channel, _ in draws if channel == "real") / len(draws)
    assert 0.48 <= real_fraction <= 0.52
    assert {episode_id for channel, episode_id in draws if channel == "real"} <= set(spec.real_set)
    assert {channel for channel, _ in draws} == {"real", "pseudo"}

    assert mixture_digest(draws) == mixture_digest(build_mixture(spec, 10000))
    assert mixture_digest(draws) != mixture_digest(build_mixture(MixtureSpec(dict(spec.serialized(), seed=4)), 10000))


@pytest.mark.unit
def test_build_mixture_edges():
    """Unit test for single-source mixtures and invalid mixtures.

    Note:
        Tests :func:`~compsim.dataset.build_mixture`.

    Returns:
        None

    """
    only_synthetic = MixtureSpec({"alpha": 0.0, "real_set": [], "pseudo_set": ["s0", "s1"],
                                  "synthetic_channel": "sim"})
    assert {channel for channel, _ in build_mixture(only_synthetic, 50)} == {"sim"}

    only_real = MixtureSpec({"alpha": 1.0, "real_set": ["r0"], "pseudo_set": []})
    assert build_mixture(only_real, 3) == [("real", "r0")] * 3
    assert build_mixture(only_real, 0) == []

    with pytest.raises(MixtureError):
        build_mixture(MixtureSpec({"alpha": 1.5, "real_set": ["r0"], "pseudo_set": ["p0"]}), 1)
    with pytest.raises(MixtureError):
        build_mixture(MixtureSpec({"alpha": 0.5, "real_set": [], "pseudo_set": ["p0"]}), 1)
    with pytest.raises(MixtureError):
        build_mixture(MixtureSpec({"alpha": 0.5, "real_set": ["r0"], "pseudo_set": []}), 1)
