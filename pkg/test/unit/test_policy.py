# -*- coding: utf-8 -*-
"""Pytest unit tests for CompSim policy module.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import math

import numpy as np
import pytest
import torch

from compsim.exceptions import PolicyError
from compsim.models import EvalSuite, TaskSpec
from compsim.policy import (
    ExpertPolicy, PolicyParams, RandomPolicy, build_regime, build_suites, evaluate_regimes, read_regime_csv, rollout,
    select_episodes, success_rate, train_policy, write_regime_csv
)
from compsim.realchannel import generate_paired_episode


@pytest.mark.unit
def test_build_regime(cfg, small_cfg):
    """Unit test for regime episode counts and the mixture weight they imply.

    Note:
        Tests :func:`~compsim.policy.build_regime`.

    Returns:
        None

    """
    regime = build_regime("r10_pseudo200", cfg)
    assert regime.counts == {"real": 10, "pseudo": 200}
    assert regime.alpha == pytest.approx(10 / 210)
    assert regime.order == "joint"
    assert regime.synthetic_source == "pseudo"

    pretrain = build_regime("sim200_pre_r10", cfg)
    assert pretrain.order == "pretrain_finetune"
    assert pretrain.synthetic_source == "sim"

    assert build_regime("r20", cfg).alpha == 1.0
    assert build_regime("pseudo200", cfg).alpha == 0.0

    scaled = build_regime("r10_pseudo200", small_cfg)
    assert scaled.counts == {"real": 1, "pseudo": 2}
    assert scaled.alpha == pytest.approx(1 / 3)

    with pytest.raises(PolicyError):
        build_regime("r30", cfg)


@pytest.mark.unit
def test_select_episodes(card_pair, small_cfg, cfg):
    """Unit test for picking the episodes each source of a regime consumes.

    Note:
        Tests :func:`~compsim.policy.select_episodes`.

    Returns:
        None

    """
    regime = build_regime("r10", small_cfg)
    reals = [generate_paired_episode(card_pair.sim.task, seed, cfg=cfg).real for seed in range(3)]

    picked = select_episodes(regime, {"real": reals}, seed=0)
    assert len(picked["real"]) == 1
    assert picked == select_episodes(regime, {"real": list(reversed(reals))}, seed=0)

    with pytest.raises(PolicyError) as err:
        select_episodes(build_regime("r10_sim200", small_cfg), {"real": reals}, seed=0)
    assert err.value.payload["source"] == "sim"


@pytest.mark.unit
def test_train_policy(card_pair, small_cfg, tmp_path):
    """Unit test for training, saving, and reloading a small behavior-cloning policy.

    Note:
        Tests :func:`~compsim.policy.train_policy` and :meth:`~compsim.policy.PolicyParams.load`.

    Returns:
        None

    """
    regime = build_regime("r10", small_cfg)
    params = train_policy(regime, {"real": [card_pair.real]}, small_cfg)
    again = train_policy(regime, {"real": [card_pair.real]}, small_cfg)

    assert params.task == "move_card_away"
    assert params.episodes == {"real": [card_pair.real.episode_id]}
    assert len(params.losses) == 1
    assert params.losses == again.losses
    for name, tensor in params.network.state_dict().items():
        assert torch.equal(tensor, again.network.state_dict()[name])

    loaded = PolicyParams.load(params.save(tmp_path / "policy"))
    assert loaded.regime == regime
    frames = list(card_pair.real.frames[:3])
    assert loaded.predict(frames) == params.predict(frames)
    assert len(params.predict(frames)) == small_cfg.policy["pred_horizon"]


@pytest.mark.unit
def test_train_policy_pretrain_finetune(card_pair, small_cfg, cfg):
    """Unit test for a regime that pretrains on sim episodes before fine-tuning on real ones.

    Note:
        Tests :func:`~compsim.policy.train_policy`.

    Returns:
        None

    """
    other = generate_paired_episode(card_pair.sim.task, 1, cfg=cfg)
    episodes = {"real": [card_pair.real], "sim": [card_pair.sim, other.sim]}
    params = train_policy(build_regime("sim200_pre_r10", small_cfg), episodes, small_cfg)
    assert len(params.losses) == 2
    assert sorted(params.episodes) == ["real", "sim"]

    bottle = generate_paired_episode(TaskSpec.from_label("shake_bottle"), 0, cfg=cfg)
    with pytest.raises(PolicyError):
        train_policy(build_regime("r10_sim200", small_cfg), dict(episodes, real=[bottle.real]), small_cfg)


@pytest.mark.unit
def test_expert_rollout_succeeds(cfg):
    """Unit test for the scripted expert on in-domain trials.

    Note:
        Tests :func:`~compsim.policy.rollout`.

    Returns:
        None

    """
    for label in ("move_card_away", "shake_bottle", "handover"):
        for seed in (10000, 10001):
            success, trace = rollout(ExpertPolicy(), TaskSpec.from_label(label), seed, cfg)
            assert success, f"{label} seed {seed}"
            assert len(trace.states) == len(trace.actions) + 1


@pytest.mark.unit
def test_rollout_is_deterministic(cfg):
    """Unit test for replaying one trial of a seeded random policy.

    Note:
        Tests :func:`~compsim.policy.rollout`.

    Returns:
        None

    """
    task = TaskSpec.from_label("move_card_away")
    first = rollout(RandomPolicy(), task, 3, cfg)
    second = rollout(RandomPolicy(), task, 3, cfg)
    assert first[0] == second[0]
    assert first[1].actions == second[1].actions
    assert first[1].states == second[1].states
    assert len(first[1].actions) <= cfg.policy["step_budget"]


@pytest.mark.unit
def test_random_policy_rarely_succeeds(cfg):
    """Unit test for the success count of uniform random actions over a full suite.

    Note:
        Tests :func:`~compsim.policy.evaluate_regimes`.

    Returns:
        None

    """
    suite = EvalSuite({"kind": "in_domain", "trials": 30, "base_seed": 10000})
    rows = evaluate_regimes({"random": {"stack_blocks_two": RandomPolicy()}}, [suite], ["stack_blocks_two"], cfg)
    assert len(rows) == 1
    assert rows[0]["trials"] == 30
    assert rows[0]["successes"] <= 2


@pytest.mark.unit
def test_evaluate_regimes_tables(cfg, tmp_path):
    """Unit test for empty suites, absent policies, and repeated evaluation.

    Note:
        Tests :func:`~compsim.policy.evaluate_regimes` and :func:`~compsim.policy.write_regime_csv`.

    Returns:
        None

    """
    empty = EvalSuite({"kind": "ood_object", "trials": 0, "base_seed": 30000})
    assert evaluate_regimes({"expert": {"move_card_away": ExpertPolicy()}}, [empty], ["move_card_away"], cfg) == []

    suite = EvalSuite({"kind": "in_domain", "trials": 2, "base_seed": 10000})
    policies = {"expert": {"move_card_away": ExpertPolicy()}, "missing": {}}
    rows = evaluate_regimes(policies, [suite], ["move_card_away"], cfg)
    assert rows == [
        {"task": "move_card_away", "suite": "in_domain", "regime": "expert", "successes": 2, "trials": 2},
        {"task": "move_card_away", "suite": "in_domain", "regime": "missing", "successes": "absent", "trials": 2},
    ]
    assert evaluate_regimes(policies, [suite], ["move_card_away"], cfg) == rows

    assert success_rate(rows, "expert", "in_domain") == 1.0
    assert math.isnan(success_rate(rows, "missing", "in_domain"))

    loaded = read_regime_csv(write_regime_csv(rows, tmp_path / "policy.csv"))
    assert loaded[1] == {"task": "move_card_away", "suite": "in_domain", "regime": "missing", "successes": "absent",
                         "trials": "2"}


@pytest.mark.unit
def test_evaluate_regimes_skips_missing_object_variant(cfg):
    """Unit test for tasks with no bottle or card on the ood_object suite.

    Note:
        Tests :func:`~compsim.policy.evaluate_regimes`.

    Returns:
        None

    """
    suites = [EvalSuite({"kind": "ood_object", "trials": 1, "base_seed": 30000}),
              EvalSuite({"kind": "in_domain", "trials": 1, "base_seed": 10000})]
    policies = {"random": {"stack_blocks_two": RandomPolicy(), "move_card_away": RandomPolicy()}}
    rows = evaluate_regimes(policies, suites, ["stack_blocks_two", "move_card_away"], cfg)
    assert [(r["task"], r["suite"]) for r in rows] == [
        ("move_card_away", "ood_object"), ("stack_blocks_two", "in_domain"), ("move_card_away", "in_domain")
    ]


@pytest.mark.unit
def test_build_suites(cfg):
    """Unit test for the configured evaluation suites.

    Note:
        Tests :func:`~compsim.policy.build_suites`.

    Returns:
        None

    """
    suites = build_suites(cfg)
    assert [s.kind for s in suites] == ["in_domain", "ood_spatial", "ood_object"]
    assert all(s.trials == 30 for s in suites)
    assert len(set(np.concatenate([s.seeds for s in suites]))) == 90

    assert [s.trials for s in build_suites(cfg, trials=0, kinds=["ood_spatial"])] == [0]
