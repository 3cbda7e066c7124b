# -*- coding: utf-8 -*-
"""Pytest unit tests for CompSim blockworld module.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import numpy as np
import pytest

from compsim.blockworld import (
    OOD_BOTTLE_COLORS, ROLE_REGIONS, _card_destination, check_success, compile_primitive, object_pixel_centroids,
    projected_center, region_nodes, render_sim, replay, sample_initial_state, schedule_task, step,
    supports_object_variant
)
from compsim.config import TRAIN_LABELS
from compsim.exceptions import BoundsError, CameraError, GenerationError, PrimitiveError
from compsim.models import CameraModel, LowLevelAction, ObjectInstance, Primitive, TaskSpec, WorldState


def _block(object_id, x, y, z=0.0):
    return ObjectInstance({"id": object_id, "shape": "block", "color": (0.1, 0.7, 0.2), "pose": (x, y, z, 0.0),
                           "size": (0.04, 0.04)})


def _action(dx=0.0, dy=0.0, dz=0.0, gripper_cmd="hold"):
    return LowLevelAction({"dx": dx, "dy": dy, "dz": dz, "gripper_cmd": gripper_cmd})


@pytest.mark.unit
def test_step_hold_only_advances_step_index(cfg):
    """Unit test for the identity action.

    Note:
        Tests :func:`~compsim.blockworld.step`.

    Returns:
        None

    """
    state = sample_initial_state(TaskSpec.from_label("shake_bottle"), 0, cfg)
    after = step(state, LowLevelAction.hold(), cfg)

    assert after.step_index == state.step_index + 1
    assert after.replace(step_index=state.step_index) == state


@pytest.mark.unit
def test_step_translates_and_clips(cfg):
    """Unit test for gripper translation and clipping to the table volume.

    Note:
        Tests :func:`~compsim.blockworld.step`.

    Returns:
        None

    """
    state = WorldState({"gripper_pose": (0.0, 0.0, 0.1)})
    assert step(state, _action(dx=0.02), cfg).gripper_pose == pytest.approx((0.02, 0.0, 0.1))

    corner = WorldState({"gripper_pose": (0.59, 0.0, 0.29)})
    moved = step(corner, _action(dx=0.02, dy=-0.02, dz=0.02), cfg)
    assert moved.gripper_pose == pytest.approx((0.6, 0.0, 0.3))


@pytest.mark.unit
def test_step_rejects_oversized_actions(cfg):
    """Unit test for the per-step magnitude limit.

    Note:
        Tests :func:`~compsim.blockworld.step`.

    Returns:
        None

    """
    with pytest.raises(BoundsError):
        step(WorldState({}), _action(dz=-0.03), cfg)


@pytest.mark.unit
def test_step_grasp_and_release(cfg):
    """Unit test for closing near a block, carrying it, and releasing it onto another block.

    Note:
        Tests :func:`~compsim.blockworld.step`.

    Returns:
        None

    """
    state = WorldState({"gripper_pose": (0.3, 0.3, 0.01), "gripper_open": True,
                        "objects": [_block("base", 0.2, 0.2), _block("top", 0.3, 0.3)]})
    grasped = step(state, _action(gripper_cmd="close"), cfg)
    assert grasped.held_object == "top"
    assert not grasped.gripper_open
    assert grasped.object_by_id("top").pose[:3] == pytest.approx((0.3, 0.3, 0.01))

    carried = grasped.replace(gripper_pose=(0.2, 0.2, 0.08))
    carried = step(carried, _action(dz=-0.02), cfg)
    assert carried.object_by_id("top").pose[:3] == pytest.approx((0.2, 0.2, 0.06))

    released = step(carried, _action(gripper_cmd="open"), cfg)
    assert released.held_object is None
    assert released.object_by_id("top").pose[2] == pytest.approx(0.04)


@pytest.mark.unit
def test_step_close_out_of_reach(cfg):
    """Unit test for closing the gripper farther than the grasp radius from every object.

    Note:
        Tests :func:`~compsim.blockworld.step`.

    Returns:
        None

    """
    state = WorldState({"gripper_pose": (0.3, 0.3, 0.1), "objects": [_block("block", 0.3, 0.3)]})
    closed = step(state, _action(gripper_cmd="close"), cfg)
    assert closed.held_object is None
    assert not closed.gripper_open


@pytest.mark.unit
def test_compile_move_to(cfg):
    """Unit test for MoveTo step counts.

    Note:
        Tests :func:`~compsim.blockworld.compile_primitive`.

    Returns:
        None

    """
    state = WorldState({"gripper_pose": (0.3, 0.3, 0.15)})
    assert compile_primitive(Primitive({"kind": "MoveTo", "target": (0.3, 0.3, 0.15)}), state, cfg) == []

    actions = compile_primitive(Primitive({"kind": "MoveTo", "target": (0.35, 0.3, 0.15)}), state, cfg)
    assert len(actions) == 3
    assert replay(state, actions, cfg)[-1].gripper_pose == pytest.approx((0.35, 0.3, 0.15))

    with pytest.raises(PrimitiveError):
        compile_primitive(Primitive({"kind": "MoveTo", "target": (0.7, 0.3, 0.15)}), state, cfg)


@pytest.mark.unit
def test_compile_shake(cfg):
    """Unit test for Shake compiling to a lift followed by alternating x motion.

    Note:
        Tests :func:`~compsim.blockworld.compile_primitive`.

    Returns:
        None

    """
    state = WorldState({"gripper_pose": (0.3, 0.3, 0.0)})
    primitive = Primitive({"kind": "Shake", "target": "bottle", "params": {"n": 3, "amplitude": 0.04}})
    actions = compile_primitive(primitive, state, cfg)

    lift = [a for a in actions if a.dz != 0.0]
    assert actions[:len(lift)] == lift
    assert all(a.dz > 0 for a in lift)
    assert sum(a.dz for a in lift) == pytest.approx(cfg.world["lift_height"])

    signs = [a.dx > 0 for a in actions[len(lift):] if a.dx != 0.0]
    assert sum(1 for s, t in zip(signs[:-1], signs[1:]) if s != t) == 5


@pytest.mark.unit
def test_compile_infeasible_primitives(cfg):
    """Unit test for primitives that cannot be compiled in the given state.

    Note:
        Tests :func:`~compsim.blockworld.compile_primitive`.

    Returns:
        None

    """
    holding = WorldState({"held_object": "a", "gripper_open": False,
                          "objects": [_block("a", 0.3, 0.3, 0.1), _block("b", 0.2, 0.2)]})
    with pytest.raises(PrimitiveError):
        compile_primitive(Primitive({"kind": "Grasp", "target": "b"}), holding, cfg)
    with pytest.raises(PrimitiveError):
        compile_primitive(Primitive({"kind": "Grasp", "target": "missing"}), WorldState({}), cfg)
    with pytest.raises(PrimitiveError):
        compile_primitive(Primitive({"kind": "Shake", "params": {"n": 0, "amplitude": 0.04}}), WorldState({}), cfg)
    with pytest.raises(PrimitiveError):
        compile_primitive(Primitive({"kind": "Stack", "target": "b"}), WorldState({"objects": [_block("b", 0.2, 0.2)]}),
                          cfg)


@pytest.mark.unit
def test_region_nodes_are_disjoint():
    """Unit test for the in-domain and out-of-domain initialization regions.

    Note:
        Tests :func:`~compsim.blockworld.region_nodes`.

    Returns:
        None

    """
    for role in ROLE_REGIONS:
        inner, outer = set(region_nodes(role, "in_domain")), set(region_nodes(role, "ood_spatial"))
        assert inner
        assert outer
        assert not inner & outer


@pytest.mark.unit
def test_sample_initial_state(cfg):
    """Unit test for seeded initial states of task variants.

    Note:
        Tests :func:`~compsim.blockworld.sample_initial_state` and :func:`~compsim.blockworld.supports_object_variant`.

    Returns:
        None

    """
    task = TaskSpec.from_label("move_card_away_cluttered")
    state = sample_initial_state(task, 3, cfg)
    assert state == sample_initial_state(task, 3, cfg)
    assert len(state.objects) == 1 + cfg.world["clutter_count"]
    for obj in state.objects:
        assert 0.0 <= obj.pose[0] <= cfg.world["table_size"]
        assert 0.0 <= obj.pose[1] <= cfg.world["table_size"]

    bottle = sample_initial_state(TaskSpec.from_label("shake_bottle", object_variant="ood_object"), 0, cfg)
    assert bottle.object_by_id("bottle").color in OOD_BOTTLE_COLORS.values()

    handover = sample_initial_state(TaskSpec.from_label("handover"), 0, cfg)
    assert handover.receiver_pose == tuple(cfg.world["receiver_pose"])

    assert supports_object_variant("move_card_away", "ood_object")
    assert supports_object_variant("stack_blocks_two", "canonical")
    assert not supports_object_variant("stack_blocks_two", "ood_object")
    with pytest.raises(GenerationError):
        sample_initial_state(TaskSpec.from_label("stack_blocks_two", object_variant="ood_object"), 0, cfg)
    with pytest.raises(GenerationError):
        sample_initial_state(TaskSpec.from_label("juggle"), 0, cfg)


@pytest.mark.unit
def test_card_destination_is_nearest_edge():
    """Unit test for the push target of move_card_away.

    Note:
        Tests :func:`~compsim.blockworld._card_destination`.

    Returns:
        None

    """
    assert _card_destination(_block("card", 0.25, 0.3), 0.6) == pytest.approx((0.1, 0.3))
    assert _card_destination(_block("card", 0.3, 0.35), 0.6) == pytest.approx((0.3, 0.5))
    assert _card_destination(_block("card", 0.3, 0.3), 0.6) == pytest.approx((0.5, 0.3))


@pytest.mark.unit
def test_schedule_task_is_deterministic_and_replayable(cfg):
    """Unit test for scheduling the same task variant and seed twice.

    Note:
        Tests :func:`~compsim.blockworld.schedule_task` and :func:`~compsim.blockworld.replay`.

    Returns:
        None

    """
    task = TaskSpec.from_label("move_card_away")
    trajectory = schedule_task(task, 4, cfg)
    assert trajectory == schedule_task(task, 4, cfg)
    assert len(trajectory.states) == len(trajectory.actions) + 1
    assert replay(trajectory.states[0], trajectory.actions, cfg) == trajectory.states
    assert replay(trajectory.states[0], [], cfg) == [trajectory.states[0]]
    assert check_success(task, trajectory.states[-1], trajectory.states, cfg)


@pytest.mark.unit
@pytest.mark.parametrize("label", TRAIN_LABELS)
def test_schedule_task_succeeds(cfg, label):
    """Unit test for the scheduler emitting successful demonstrations of every task variant over 100 seeds per region.

    Note:
        Tests :func:`~compsim.blockworld.schedule_task` and :func:`~compsim.blockworld.check_success`.

    Returns:
        None

    """
    for init_region in ("in_domain", "ood_spatial"):
        task = TaskSpec.from_label(label, init_region)
        for seed in range(100):
            trajectory = schedule_task(task, seed, cfg)
            assert check_success(task, trajectory.states[-1], trajectory.states, cfg)
            for state in trajectory.states:
                assert state.held_object is None or state.object_by_id(state.held_object).pose[:3] == pytest.approx(
                    state.gripper_pose)


@pytest.mark.unit
def test_schedule_stack_primitive_order(cfg):
    """Unit test for the primitive log of stack_blocks_two.

    Note:
        Tests :func:`~compsim.blockworld.schedule_task`.

    Returns:
        None

    """
    log = [(p.kind, p.target) for p in schedule_task(TaskSpec.from_label("stack_blocks_two"), 0, cfg).primitives]
    assert log.index(("Grasp", "green")) < log.index(("Stack", "green"))
    assert log.index(("Release", None)) < log.index(("Grasp", "yellow"))


@pytest.mark.unit
def test_check_success_predicates(cfg):
    """Unit test for task success predicates on hand-built states.

    Note:
        Tests :func:`~compsim.blockworld.check_success`.

    Returns:
        None

    """
    card_task = TaskSpec.from_label("move_card_away")
    initial = sample_initial_state(card_task, 0, cfg)
    assert not check_success(card_task, initial, [initial], cfg)

    stack_task = TaskSpec.from_label("stack_blocks_two")
    tolerance = cfg.world["stack_tolerance"]
    stacked = WorldState({"objects": [_block("green", 0.3, 0.2), _block("yellow", 0.3, 0.2, 0.04)]})
    offset = WorldState({"objects": [_block("green", 0.3, 0.2), _block("yellow", 0.3 + 2 * tolerance, 0.2, 0.04)]})
    assert check_success(stack_task, stacked, [stacked], cfg)
    assert not check_success(stack_task, offset, [offset], cfg)

    handover_task = TaskSpec.from_label("handover")
    handed = WorldState({"handover_object": "item", "objects": [_block("item", 0.5, 0.3, 0.12)]})
    assert not check_success(handover_task, handed, [handed], cfg)
    assert check_success(handover_task, handed, [handed.replace(held_object="item", handover_object=None), handed],
                         cfg)


@pytest.mark.unit
def test_render_sim(cfg):
    """Unit test for the sim renderer.

    Note:
        Tests :func:`~compsim.blockworld.render_sim`.

    Returns:
        None

    """
    camera = cfg.camera_model()
    # gripper far outside the field of view
    empty = WorldState({"gripper_pose": (5.0, 5.0, 0.0)})
    frame = render_sim(empty, camera, cfg)
    assert frame.shape == (64, 64, 3)
    assert np.all(frame == np.array(cfg.render["table_color"]))

    state = WorldState({"gripper_pose": (5.0, 5.0, 0.0), "objects": [_block("block", 0.3, 0.3)]})
    assert np.array_equal(render_sim(state, camera, cfg), render_sim(state, camera, cfg))
    centroid = np.array(object_pixel_centroids(state, camera, cfg)["block"])
    assert np.linalg.norm(centroid - projected_center(state.objects[0], camera)) <= 1.0

    degenerate = CameraModel(dict(camera.serialized(), fx=0.0))
    with pytest.raises(CameraError):
        render_sim(state, degenerate, cfg)
