# -*- coding: utf-8 -*-
"""CompSim module for the deterministic 2.5D tabletop simulator.

The simulator holds a planar table with rigid objects, one active gripper, and (for handover tasks) a passive receiving
gripper at a fixed pose. It provides the pure transition kernel, the action primitives that compile to low-level
actions, the per-task primitive templates used by the scheduler, the task success predicates, and the flat-color
renderer of the sim channel.

Example:
    Schedule a demonstration and render its frames::

        cfg = load_config("config/experiment.json")
        trajectory = schedule_task(TaskSpec.from_label("move_card_away"), seed=3, cfg=cfg)
        frames = [render_sim(state, cfg.camera_model(), cfg) for state in trajectory.states]

Attributes:
    logger (Logger): Module level logger for usage and debugging.
    STACK_SITE (tuple[float]): Table point where the base block of a stack is placed.
    ROLE_REGIONS (dict): Per object role, the in-domain rectangle and the enclosing rectangle whose remaining lattice
        ring is the out-of-domain spatial region.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import math
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from compsim.calib import project, snap_pose
from compsim.config import ExperimentConfig, resolve_config
from compsim.exceptions import BoundsError, GenerationError, PrimitiveError
from compsim.logger import get_logger
from compsim.models import CameraModel, LowLevelAction, ObjectInstance, Primitive, TaskSpec, Trajectory, WorldState

logger = get_logger(__name__)

STACK_SITE = (0.30, 0.20)

# (x range, y range) of the in-domain rectangle, then of the enclosing rectangle
ROLE_REGIONS: Dict[str, Tuple[Tuple[Tuple[float, float], Tuple[float, float]], ...]] = {
    "bottle": (((0.25, 0.35), (0.25, 0.35)), ((0.15, 0.45), (0.15, 0.45))),
    "card": (((0.25, 0.35), (0.25, 0.35)), ((0.20, 0.40), (0.20, 0.40))),
    "green": (((0.10, 0.15), (0.35, 0.45)), ((0.05, 0.20), (0.30, 0.50))),
    "yellow": (((0.45, 0.50), (0.35, 0.45)), ((0.40, 0.55), (0.30, 0.50))),
    "mouse": (((0.10, 0.20), (0.10, 0.20)), ((0.05, 0.25), (0.05, 0.25))),
    "pad": (((0.40, 0.45), (0.40, 0.45)), ((0.35, 0.50), (0.35, 0.50))),
    "item": (((0.15, 0.25), (0.25, 0.35)), ((0.10, 0.30), (0.20, 0.40))),
}

TASK_OBJECTS = {
    "shake_bottle": ("bottle",),
    "move_card_away": ("card",),
    "stack_blocks_two": ("green", "yellow"),
    "place_pad": ("pad", "mouse"),
    "handover": ("item",),
}

CANONICAL_OBJECTS = {
    "bottle": {"shape": "bottle", "color": (1.0, 0.55, 0.05), "size": (0.05, 0.05)},
    "card": {"shape": "card", "color": (0.1, 0.2, 0.8), "size": (0.06, 0.09)},
    "green": {"shape": "block", "color": (0.1, 0.7, 0.2), "size": (0.04, 0.04)},
    "yellow": {"shape": "block", "color": (0.95, 0.85, 0.1), "size": (0.04, 0.04)},
    "mouse": {"shape": "block", "color": (0.3, 0.3, 0.35), "size": (0.04, 0.06)},
    "pad": {"shape": "pad", "color": (0.7, 0.3, 0.6), "size": (0.12, 0.12)},
    "item": {"shape": "block", "color": (0.8, 0.15, 0.15), "size": (0.04, 0.04)},
}

OOD_BOTTLE_COLORS = {
    "cola": (0.25, 0.08, 0.05),
    "sprite": (0.2, 0.75, 0.35),
    "tea": (0.75, 0.55, 0.2),
}
OOD_CARD_COLOR = (0.85, 0.1, 0.1)
CLUTTER_COLORS = ((0.5, 0.5, 0.55), (0.35, 0.55, 0.6), (0.6, 0.45, 0.3), (0.45, 0.4, 0.6))
CLUTTER_SIZE = (0.03, 0.03)

JITTER = 0.024
EPS = 1e-9


def supports_object_variant(name: str, object_variant: str) -> bool:
    """Whether a task has an object variant (ood_object needs a bottle or a card to swap).
    """
    return object_variant != "ood_object" or bool({"bottle", "card"} & set(TASK_OBJECTS.get(name, ())))


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# TRANSITION KERNEL # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def _advance(position: Sequence[float], action: LowLevelAction, world: Dict[str, Any]) -> Tuple[float, float, float]:
    table, z_max = world["table_size"], world["z_max"]
    x = min(max(position[0] + action.dx, 0.0), table)
    y = min(max(position[1] + action.dy, 0.0), table)
    z = min(max(position[2] + action.dz, 0.0), z_max)
    return x, y, z


def _distance(a: Sequence[float], b: Sequence[float]) -> float:
    return math.sqrt(sum((p - q) ** 2 for p, q in zip(a[:3], b[:3])))


def stack_height(objects: Sequence[ObjectInstance], x: float, y: float, exclude: Optional[str] = None) -> float:
    """Elevation at which an object released at (x, y) comes to rest.

    Args:
        objects (Sequence[ObjectInstance]): Objects on the table.
        x (float): Release x.
        y (float): Release y.
        exclude (str, optional): Id of the released object.

    Returns:
        float: Highest top among objects whose footprint contains (x, y), or 0.0 for the bare table.

    """
    tops = [obj.top for obj in objects if obj.id != exclude and obj.contains_xy(x, y)]
    return max(tops) if tops else 0.0


def _grasp_candidate(objects: Sequence[ObjectInstance], position: Sequence[float],
                     radius: float) -> Optional[ObjectInstance]:
    candidates = [
        (_distance(position, obj.pose), obj.id, obj) for obj in objects
        if obj.graspable and _distance(position, obj.pose) <= radius + EPS
    ]
    if not candidates:
        return None
    return min(candidates, key=lambda candidate: (candidate[0], candidate[1]))[2]


def step(state: WorldState, action: LowLevelAction, cfg: Optional[ExperimentConfig] = None) -> WorldState:
    """Apply one low-level action: translate the gripper (clipped to the table volume), then apply its command.

    Closing within the grasp radius of a graspable object picks up the nearest one (ties by id). Opening while holding
    hands the object to the receiver when the gripper is within the grasp radius of it, and otherwise drops the object
    to the stack height under it. A held object tracks the gripper and keeps its yaw.

    Args:
        state (WorldState): Current state.
        action (LowLevelAction): Action to apply.
        cfg (ExperimentConfig, optional): Experiment configuration.

    Returns:
        WorldState: Successor state with step_index incremented.

    Raises:
        BoundsError: When a translation component exceeds max_step.

    """
    world = resolve_config(cfg).world
    limit = world["max_step"]
    for name, value in zip(("dx", "dy", "dz"), action.delta):
        if not abs(value) <= limit + EPS:
            raise BoundsError(f"Action component {name}={value} exceeds max_step {limit}.", payload=action.serialized())

    position = _advance(state.gripper_pose, action, world)
    gripper_open = state.gripper_open
    held = state.held_object
    handover = state.handover_object
    objects = list(state.objects)

    if action.gripper_cmd == "close" and gripper_open:
        gripper_open = False
        if held is None:
            candidate = _grasp_candidate(objects, position, world["grasp_radius"])
            if candidate is not None:
                held = candidate.id
                if handover == held:
                    handover = None
    elif action.gripper_cmd == "open" and not gripper_open:
        gripper_open = True
        if held is not None:
            index = next(i for i, obj in enumerate(objects) if obj.id == held)
            obj = objects[index]
            receiver = state.receiver_pose
            if receiver is not None and _distance(position, receiver) <= world["grasp_radius"] + EPS:
                objects[index] = obj.with_pose((receiver[0], receiver[1], receiver[2], obj.pose[3]))
                handover = held
            else:
                rest = stack_height(objects, position[0], position[1], exclude=held)
                objects[index] = obj.with_pose((position[0], position[1], rest, obj.pose[3]))
            held = None

    if held is not None:
        index = next(i for i, obj in enumerate(objects) if obj.id == held)
        objects[index] = objects[index].with_pose((position[0], position[1], position[2], objects[index].pose[3]))

    return state.replace(
        gripper_pose=position, gripper_open=gripper_open, held_object=held, handover_object=handover,
        objects=objects, step_index=state.step_index + 1
    )


def replay(initial: WorldState, actions: Sequence[LowLevelAction],
           cfg: Optional[ExperimentConfig] = None) -> List[WorldState]:
    """Replay actions from an initial state.

    Args:
        initial (WorldState): First state.
        actions (Sequence[LowLevelAction]): Actions to apply in order.
        cfg (ExperimentConfig, optional): Experiment configuration.

    Returns:
        list[WorldState]: len(actions) + 1 states starting with initial.

    """
    cfg = resolve_config(cfg)
    states = [initial]
    for action in actions:
        states.append(step(states[-1], action, cfg))
    return states


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# ACTION PRIMITIVES # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

class _Compiler(object):
    """Accumulates low-level actions while tracking the gripper exactly as :func:`step` will.
    """

    def __init__(self, state: WorldState, world: Dict[str, Any]):
        self.world = world
        self.position: Tuple[float, float, float] = tuple(state.gripper_pose)
        self.gripper_open: bool = state.gripper_open
        self.actions: List[LowLevelAction] = []

    def move_to(self, goal: Sequence[float]) -> None:
        goal = tuple(float(v) for v in goal)
        table, z_max = self.world["table_size"], self.world["z_max"]
        if not (-EPS <= goal[0] <= table + EPS and -EPS <= goal[1] <= table + EPS and -EPS <= goal[2] <= z_max + EPS):
            raise PrimitiveError(f"Target {goal} lies outside the table volume.")
        start = np.array(self.position)
        delta = np.array(goal) - start
        distance = float(np.max(np.abs(delta)))
        if distance <= 1e-12:
            return
        count = int(math.ceil(distance / self.world["max_step"] - 1e-9))
        for index in range(1, count + 1):
            want = start + delta * (index / count)
            action = LowLevelAction({
                "dx": want[0] - self.position[0], "dy": want[1] - self.position[1], "dz": want[2] - self.position[2],
                "gripper_cmd": "hold"
            })
            self.actions.append(action)
            self.position = _advance(self.position, action, self.world)

    def command(self, gripper_cmd: str) -> None:
        self.actions.append(LowLevelAction.command(gripper_cmd))
        if gripper_cmd == "open":
            self.gripper_open = True
        elif gripper_cmd == "close":
            self.gripper_open = False


def _object(state: WorldState, object_id: Any) -> ObjectInstance:
    obj = state.object_by_id(object_id) if isinstance(object_id, str) else None
    if obj is None:
        raise PrimitiveError(f"Unknown object id \"{object_id}\".", payload=state.object_ids())
    return obj


def _target_point(primitive: Primitive, state: WorldState) -> Tuple[float, float, float]:
    if isinstance(primitive.target, str):
        return tuple(_object(state, primitive.target).pose[:3])
    if primitive.target is None or len(primitive.target) != 3:
        raise PrimitiveError(f"{primitive.kind} requires an object id or an (x, y, z) target.",
                             payload=primitive.serialized())
    return tuple(primitive.target)


def _compile_grasp(compiler: _Compiler, state: WorldState, object_id: str) -> None:
    if state.held_object is not None:
        raise PrimitiveError(f"Cannot grasp \"{object_id}\" while holding \"{state.held_object}\".")
    obj = _object(state, object_id)
    if not obj.graspable:
        raise PrimitiveError(f"Object \"{object_id}\" ({obj.shape}) is not graspable.")
    x, y, z = obj.pose[:3]
    if not compiler.gripper_open:
        compiler.command("open")
    compiler.move_to((x, y, min(compiler.world["z_max"], z + compiler.world["approach_height"])))
    compiler.move_to((x, y, z))
    compiler.command("close")


def compile_primitive(primitive: Primitive, state: WorldState,
                      cfg: Optional[ExperimentConfig] = None) -> List[LowLevelAction]:
    """Compile an action primitive into low-level actions starting from a state.

    Args:
        primitive (Primitive): Primitive to compile.
        state (WorldState): State in which execution starts.
        cfg (ExperimentConfig, optional): Experiment configuration.

    Returns:
        list[LowLevelAction]: Actions whose execution achieves the primitive postcondition.

    Raises:
        PrimitiveError: When the primitive is malformed or infeasible in the state.

    """
    primitive.validate()
    world = resolve_config(cfg).world
    compiler = _Compiler(state, world)

    if primitive.kind == "MoveTo":
        compiler.move_to(_target_point(primitive, state))
    elif primitive.kind == "Grasp":
        _compile_grasp(compiler, state, primitive.target)
    elif primitive.kind == "Release":
        compiler.command("open")
    elif primitive.kind == "Lift":
        height = float(primitive.params.get("height", world["lift_height"]))
        compiler.move_to((compiler.position[0], compiler.position[1], height))
    elif primitive.kind == "Shake":
        cycles, amplitude = int(primitive.params["n"]), float(primitive.params["amplitude"])
        if compiler.position[2] < world["lift_height"] - EPS:
            compiler.move_to((compiler.position[0], compiler.position[1], world["lift_height"]))
        x0, y0, z0 = compiler.position
        sign = 1.0 if x0 + amplitude <= world["table_size"] + EPS else -1.0
        if not 0.0 <= x0 + sign * amplitude <= world["table_size"] + EPS:
            raise PrimitiveError(f"Shake amplitude {amplitude} does not fit on the table at x={x0}.")
        for segment in range(2 * cycles):
            compiler.move_to((x0 + sign * amplitude if segment % 2 == 0 else x0, y0, z0))
    elif primitive.kind == "Push":
        obj = _object(state, primitive.target)
        to_x, to_y = (float(v) for v in primitive.params["to"])
        _compile_grasp(compiler, state, primitive.target)
        compiler.move_to((to_x, to_y, obj.pose[2]))
        compiler.command("open")
    elif primitive.kind == "Stack":
        if state.held_object is None:
            raise PrimitiveError("Stack requires a held object.")
        base = _object(state, primitive.target)
        if base.id == state.held_object:
            raise PrimitiveError(f"Cannot stack \"{base.id}\" on itself.")
        x, y = base.pose[:2]
        compiler.move_to((x, y, min(world["z_max"], base.top + world["approach_height"])))
        compiler.move_to((x, y, base.top))
        compiler.command("open")

    logger.debug(f"Compiled {primitive.describe()} into {len(compiler.actions)} actions.")
    return compiler.actions


def _check_postcondition(primitive: Primitive, before: WorldState, after: WorldState, world: Dict[str, Any]) -> None:
    radius = world["grasp_radius"]
    failed = False
    if primitive.kind == "MoveTo":
        failed = _distance(after.gripper_pose, _target_point(primitive, before)) > radius
    elif primitive.kind == "Grasp":
        failed = after.held_object != primitive.target
    elif primitive.kind == "Release":
        failed = after.held_object is not None or not after.gripper_open
    elif primitive.kind == "Lift":
        failed = abs(after.gripper_pose[2] - float(primitive.params.get("height", world["lift_height"]))) > 1e-6
    elif primitive.kind == "Push":
        obj = after.object_by_id(primitive.target)
        to = primitive.params["to"]
        failed = after.held_object is not None or math.hypot(obj.pose[0] - to[0], obj.pose[1] - to[1]) > radius
    elif primitive.kind == "Stack":
        placed = after.object_by_id(before.held_object)
        base = after.object_by_id(primitive.target)
        failed = (after.held_object is not None
                  or math.hypot(placed.pose[0] - base.pose[0], placed.pose[1] - base.pose[1])
                  > world["stack_tolerance"]
                  or abs(placed.pose[2] - base.top) > 1e-6)
    if failed:
        raise PrimitiveError(f"Postcondition of {primitive.describe()} does not hold.", payload=after.serialized())


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# TASKS # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def _lattice_nodes(x_range: Tuple[float, float], y_range: Tuple[float, float], lattice: float) -> List[Tuple]:
    xs = [round(i * lattice, 9) for i in range(int(round(x_range[0] / lattice)), int(round(x_range[1] / lattice)) + 1)]
    ys = [round(j * lattice, 9) for j in range(int(round(y_range[0] / lattice)), int(round(y_range[1] / lattice)) + 1)]
    return [(x, y) for x in xs for y in ys]


def region_nodes(role: str, init_region: str, lattice: float = 0.05) -> List[Tuple[float, float]]:
    """Lattice nodes on which an object role may be initialized.

    Args:
        role (str): Object role (bottle, card, green, yellow, mouse, pad, item).
        init_region (str): in_domain (inner rectangle) or ood_spatial (enclosing rectangle minus the inner one).
        lattice (float): Lattice spacing in meters.

    Returns:
        list[tuple[float, float]]: Candidate (x, y) nodes.

    """
    inner, outer = ROLE_REGIONS[role]
    inner_nodes = _lattice_nodes(inner[0], inner[1], lattice)
    if init_region == "in_domain":
        return inner_nodes
    excluded = set(inner_nodes)
    return [node for node in _lattice_nodes(outer[0], outer[1], lattice) if node not in excluded]


def _key_points(task: TaskSpec, cfg: ExperimentConfig) -> List[Tuple[float, float]]:
    if task.name == "stack_blocks_two":
        return [STACK_SITE]
    if task.name == "handover":
        return [tuple(cfg.world["receiver_pose"][:2])]
    return []


def sample_initial_state(task: TaskSpec, seed: int, cfg: Optional[ExperimentConfig] = None,
                         attempt: int = 0) -> WorldState:
    """Draw the initial state of a task variant from its init region and snap every pose to the lattice.

    Args:
        task (TaskSpec): Task variant.
        seed (int): Episode seed.
        cfg (ExperimentConfig, optional): Experiment configuration.
        attempt (int): Retry index; each attempt draws from its own sub-stream.

    Returns:
        WorldState: Initial state.

    Raises:
        GenerationError: When the task is unknown or the object variant does not apply to it.

    """
    cfg = resolve_config(cfg)
    try:
        task.validate()
    except ValueError as err:
        raise GenerationError(str(err), payload=task.serialized())
    world = cfg.world
    lattice = world["lattice"]
    roles = TASK_OBJECTS[task.name]
    if not supports_object_variant(task.name, task.object_variant):
        raise GenerationError(f"Object variant ood_object is not defined for task \"{task.name}\".")

    rng = np.random.default_rng([seed, attempt])
    objects = []
    for role in roles:
        nodes = region_nodes(role, task.init_region, lattice)
        node = nodes[int(rng.integers(len(nodes)))]
        jitter = rng.uniform(-JITTER, JITTER, size=2)
        yaw = float(rng.uniform(0.0, 90.0))
        x, y, yaw = snap_pose((node[0] + jitter[0], node[1] + jitter[1], yaw), lattice)
        attributes = dict(CANONICAL_OBJECTS[role])
        if task.object_variant == "ood_object" and role == "bottle":
            attributes["color"] = OOD_BOTTLE_COLORS[sorted(OOD_BOTTLE_COLORS)[int(rng.integers(3))]]
        elif task.object_variant == "ood_object" and role == "card":
            attributes["color"] = OOD_CARD_COLOR
        objects.append(ObjectInstance(dict(attributes, id=role, pose=(x, y, 0.0, yaw))))

    if task.clutter:
        blocked = [obj.pose[:2] for obj in objects] + _key_points(task, cfg)
        free = [
            node for node in _lattice_nodes((lattice, world["table_size"] - lattice),
                                            (lattice, world["table_size"] - lattice), lattice)
            if all(math.hypot(node[0] - p[0], node[1] - p[1]) >= world["clutter_clearance"] - EPS for p in blocked)
        ]
        for index in range(world["clutter_count"]):
            free = [node for node in free if all(
                math.hypot(node[0] - p[0], node[1] - p[1]) >= world["clutter_clearance"] - EPS for p in blocked)]
            if not free:
                raise GenerationError(f"No free lattice node left for distractor {index} of {task.label}.")
            node = free[int(rng.integers(len(free)))]
            yaw = snap_pose((node[0], node[1], float(rng.uniform(0.0, 90.0))), lattice)[2]
            color = CLUTTER_COLORS[int(rng.integers(len(CLUTTER_COLORS)))]
            objects.append(ObjectInstance({
                "id": f"clutter_{index}", "shape": "block", "color": color, "pose": (node[0], node[1], 0.0, yaw),
                "size": CLUTTER_SIZE
            }))
            blocked.append(node)

    return WorldState({
        "gripper_pose": tuple(world["gripper_home"]),
        "gripper_open": True,
        "held_object": None,
        "objects": objects,
        "step_index": 0,
        "receiver_pose": tuple(world["receiver_pose"]) if task.name == "handover" else None,
        "handover_object": None,
        "background": task.background_variant,
    })


def _card_destination(card: ObjectInstance, table_size: float) -> Tuple[float, float]:
    # push toward the nearest table edge along the axis of larger offset; center pushes +x
    center = table_size / 2.0
    x, y = card.pose[:2]
    near, far = round(table_size / 6.0, 9), round(5.0 * table_size / 6.0, 9)
    if abs(y - center) > abs(x - center) + EPS:
        return x, (far if y > center else near)
    return (near if x < center - EPS else far), y


def task_primitives(task: TaskSpec, state: WorldState, rng: np.random.Generator,
                    cfg: Optional[ExperimentConfig] = None) -> List[Primitive]:
    """Primitive template of a task, with seeded parameter sampling.

    Args:
        task (TaskSpec): Task variant.
        state (WorldState): Initial state.
        rng (np.random.Generator): Parameter stream.
        cfg (ExperimentConfig, optional): Experiment configuration.

    Returns:
        list[Primitive]: Primitives in execution order.

    """
    world = resolve_config(cfg).world
    lift = {"height": world["lift_height"]}
    if task.name == "shake_bottle":
        shake = {"n": int(rng.choice([3, 4])), "amplitude": float(rng.choice([0.03, 0.04]))}
        return [Primitive({"kind": "Grasp", "target": "bottle"}), Primitive({"kind": "Lift", "params": lift}),
                Primitive({"kind": "Shake", "target": "bottle", "params": shake})]
    if task.name == "move_card_away":
        destination = _card_destination(state.object_by_id("card"), world["table_size"])
        return [Primitive({"kind": "Push", "target": "card", "params": {"to": destination}}),
                Primitive({"kind": "Lift", "params": lift})]
    if task.name == "stack_blocks_two":
        return [
            Primitive({"kind": "Grasp", "target": "green"}),
            Primitive({"kind": "Lift", "params": lift}),
            Primitive({"kind": "MoveTo", "target": (STACK_SITE[0], STACK_SITE[1], world["approach_height"])}),
            Primitive({"kind": "MoveTo", "target": (STACK_SITE[0], STACK_SITE[1], 0.0)}),
            Primitive({"kind": "Release"}),
            Primitive({"kind": "Lift", "params": lift}),
            Primitive({"kind": "Grasp", "target": "yellow"}),
            Primitive({"kind": "Lift", "params": lift}),
            Primitive({"kind": "Stack", "target": "green"}),
            Primitive({"kind": "Lift", "params": lift}),
        ]
    if task.name == "place_pad":
        pad = state.object_by_id("pad")
        return [
            Primitive({"kind": "Grasp", "target": "mouse"}),
            Primitive({"kind": "Lift", "params": lift}),
            Primitive({"kind": "MoveTo", "target": (pad.pose[0], pad.pose[1], pad.top + world["approach_height"])}),
            Primitive({"kind": "MoveTo", "target": (pad.pose[0], pad.pose[1], pad.top)}),
            Primitive({"kind": "Release"}),
            Primitive({"kind": "Lift", "params": lift}),
        ]
    if task.name == "handover":
        return [
            Primitive({"kind": "Grasp", "target": "item"}),
            Primitive({"kind": "Lift", "params": lift}),
            Primitive({"kind": "MoveTo", "target": tuple(world["receiver_pose"])}),
            Primitive({"kind": "Release"}),
            Primitive({"kind": "MoveTo", "target": tuple(world["gripper_home"])}),
        ]
    raise GenerationError(f"Unknown task \"{task.name}\".")


def schedule_task(task: TaskSpec, seed: int, cfg: Optional[ExperimentConfig] = None) -> Trajectory:
    """Generate a successful demonstration of a task variant.

    Args:
        task (TaskSpec): Task variant.
        seed (int): Episode seed.
        cfg (ExperimentConfig, optional): Experiment configuration.

    Returns:
        Trajectory: Actions, replayed states, and the primitive log.

    Raises:
        GenerationError: When the task is unknown or every attempt of the retry budget fails.

    """
    cfg = resolve_config(cfg)
    world = cfg.world
    failures = []
    log: List[Primitive] = []
    for attempt in range(world["retry_budget"]):
        initial = sample_initial_state(task, seed, cfg, attempt)
        rng = np.random.default_rng([seed, attempt, 1])
        log = []
        actions: List[LowLevelAction] = []
        states = [initial]
        try:
            for primitive in task_primitives(task, initial, rng, cfg):
                log.append(primitive)
                before = states[-1]
                chunk = compile_primitive(primitive, before, cfg)
                for action in chunk:
                    states.append(step(states[-1], action, cfg))
                actions.extend(chunk)
                _check_postcondition(primitive, before, states[-1], world)
            if check_success(task, states[-1], states, cfg):
                logger.debug(f"Scheduled {task.label} seed {seed}: {len(actions)} actions (attempt {attempt}).")
                return Trajectory({"actions": actions, "states": states, "task": task, "seed": seed,
                                   "primitives": log})
            failures.append(f"attempt {attempt}: final state does not satisfy {task.name}")
        except (PrimitiveError, BoundsError) as err:
            failures.append(f"attempt {attempt}: {err}")
        logger.warning(f"Retrying {task.label} seed {seed}: {failures[-1]}")

    raise GenerationError(
        f"Could not generate {task.label} seed {seed} within {world['retry_budget']} attempts: {failures[-1]}",
        payload={"failures": failures, "primitives": [p.describe() for p in log]}
    )


def _shake_sign_changes(trace: Sequence[WorldState], object_id: str, h_min: float) -> int:
    signs = []
    for before, after in zip(trace[:-1], trace[1:]):
        a, b = before.object_by_id(object_id), after.object_by_id(object_id)
        if a is None or b is None or a.pose[2] < h_min - EPS or b.pose[2] < h_min - EPS:
            continue
        dx = b.pose[0] - a.pose[0]
        if abs(dx) > 1e-12:
            signs.append(dx > 0)
    return sum(1 for s, t in zip(signs[:-1], signs[1:]) if s != t)


def check_success(task: TaskSpec, final: WorldState, trace: Sequence[WorldState],
                  cfg: Optional[ExperimentConfig] = None) -> bool:
    """Task success predicate.

    Args:
        task (TaskSpec): Task variant.
        final (WorldState): Final state.
        trace (Sequence[WorldState]): States of the episode (non-empty).
        cfg (ExperimentConfig, optional): Experiment configuration.

    Returns:
        bool: Whether the task was accomplished.

    """
    world = resolve_config(cfg).world
    if task.name == "shake_bottle":
        bottle_heights = [s.object_by_id("bottle").pose[2] for s in trace if s.object_by_id("bottle") is not None]
        lifted = bool(bottle_heights) and max(bottle_heights) >= world["h_min"] - EPS
        return lifted and _shake_sign_changes(trace, "bottle", world["h_min"]) >= world["n_min_sign_changes"]
    if task.name == "move_card_away":
        card = final.object_by_id("card")
        if card is None:
            return False
        low, high = world["central_region"]
        x, y = card.pose[:2]
        return x < low - EPS or x > high + EPS or y < low - EPS or y > high + EPS
    if task.name == "stack_blocks_two":
        green, yellow = final.object_by_id("green"), final.object_by_id("yellow")
        if green is None or yellow is None or final.held_object in ("green", "yellow"):
            return False
        offset = math.hypot(yellow.pose[0] - green.pose[0], yellow.pose[1] - green.pose[1])
        return offset <= world["stack_tolerance"] + EPS and yellow.pose[2] >= green.top - 1e-6
    if task.name == "place_pad":
        mouse, pad = final.object_by_id("mouse"), final.object_by_id("pad")
        if mouse is None or pad is None or final.held_object == "mouse":
            return False
        return all(pad.contains_xy(cx, cy) for cx, cy in mouse.footprint())
    if task.name == "handover":
        return final.handover_object == "item" and any(s.held_object == "item" for s in trace)
    return False


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# SIM RENDERER  # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def _outline(obj: ObjectInstance) -> np.ndarray:
    if obj.shape == "bottle":
        x, y, _, yaw = obj.pose
        angles = np.radians(yaw + 30.0 * np.arange(12))
        radius = obj.size[0] / 2.0
        return np.stack([x + radius * np.cos(angles), y + radius * np.sin(angles)], axis=1)
    return obj.footprint()


def _rectangle(x: float, y: float, w: float, h: float) -> np.ndarray:
    return np.array([[x - w / 2, y - h / 2], [x + w / 2, y - h / 2], [x + w / 2, y + h / 2], [x - w / 2, y + h / 2]])


def _polygon_mask(polygon: np.ndarray, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    positive = np.ones(us.shape, dtype=bool)
    negative = np.ones(us.shape, dtype=bool)
    for (x0, y0), (x1, y1) in zip(polygon, np.roll(polygon, -1, axis=0)):
        cross = (x1 - x0) * (vs - y0) - (y1 - y0) * (us - x0)
        positive &= cross >= -EPS
        negative &= cross <= EPS
    return positive | negative


def _projected(outline: np.ndarray, z: float, camera: CameraModel) -> np.ndarray:
    return project(np.column_stack([outline, np.full(len(outline), z)]), camera)


def rasterize(state: WorldState, camera: CameraModel,
              cfg: Optional[ExperimentConfig] = None) -> Tuple[np.ndarray, List[Dict[str, Any]]]:
    """Rasterize a state into a material map (pixel centers at integer coordinates).

    Args:
        state (WorldState): State to draw.
        camera (CameraModel): Camera.
        cfg (ExperimentConfig, optional): Experiment configuration.

    Returns:
        tuple[np.ndarray, list[dict]]: int16 map of palette indices of shape (height, width), and the palette of
        {"material", "rgb", "shape"} entries (index 0 is the table).

    Raises:
        CameraError: When the camera is degenerate.

    """
    render = resolve_config(cfg).render
    camera.validate()
    vs, us = np.mgrid[0:camera.height, 0:camera.width].astype(np.float64)
    material = np.zeros((camera.height, camera.width), dtype=np.int16)
    table_rgb = render["colored_table_color"] if state.background == "colored" else render["table_color"]
    palette: List[Dict[str, Any]] = [{"material": f"table:{state.background}", "rgb": tuple(table_rgb), "shape": None}]

    def paint(mask: np.ndarray, name: str, rgb: Sequence[float], shape: Optional[str] = None) -> None:
        palette.append({"material": name, "rgb": tuple(rgb), "shape": shape})
        material[mask] = len(palette) - 1

    if state.receiver_pose is not None:
        rx, ry, rz = state.receiver_pose
        paint(_polygon_mask(_projected(_rectangle(rx, ry, 0.04, 0.04), rz, camera), us, vs), "receiver",
              render["receiver_color"])

    for obj in sorted(state.objects, key=lambda o: (o.top, o.id)):
        paint(_polygon_mask(_projected(_outline(obj), obj.top, camera), us, vs), f"object:{obj.id}", obj.color,
              obj.shape)

    gx, gy, gz = state.gripper_pose
    center = project((gx, gy, gz), camera)
    radius = 2.0 + 20.0 * gz
    ring = np.abs(np.hypot(us - center[0], vs - center[1]) - radius) <= 0.5
    paint(ring, "ring", render["ring_color"])

    if state.gripper_open:
        fingers = np.zeros(us.shape, dtype=bool)
        for offset in (-0.02, 0.02):
            fingers |= _polygon_mask(_projected(_rectangle(gx + offset, gy, 0.01, 0.04), gz, camera), us, vs)
        paint(fingers, "gripper", render["gripper_color"])
    else:
        paint(_polygon_mask(_projected(_rectangle(gx, gy, 0.03, 0.03), gz, camera), us, vs), "gripper",
              render["gripper_color"])
    return material, palette


def render_sim(state: WorldState, camera: CameraModel, cfg: Optional[ExperimentConfig] = None) -> np.ndarray:
    """Render a state with the sim channel's flat colors.

    Args:
        state (WorldState): State to render.
        camera (CameraModel): Camera.
        cfg (ExperimentConfig, optional): Experiment configuration.

    Returns:
        np.ndarray: float64 frame of shape (height, width, 3) with values in [0, 1].

    """
    material, palette = rasterize(state, camera, cfg)
    colors = np.array([entry["rgb"] for entry in palette], dtype=np.float64)
    return colors[material]


def projected_center(obj: ObjectInstance, camera: CameraModel) -> np.ndarray:
    """Pixel position of the center of an object's top face.

    Args:
        obj (ObjectInstance): Object.
        camera (CameraModel): Camera.

    Returns:
        np.ndarray: (u, v).

    """
    return project((obj.pose[0], obj.pose[1], obj.top), camera)


def object_pixel_centroids(state: WorldState, camera: CameraModel,
                           cfg: Optional[ExperimentConfig] = None) -> Dict[str, Tuple[float, float]]:
    """Centroid of the visible pixels of every object in a rendering of the state.

    Args:
        state (WorldState): State.
        camera (CameraModel): Camera.
        cfg (ExperimentConfig, optional): Experiment configuration.

    Returns:
        dict[str, tuple[float, float]]: Object id to (u, v); fully occluded objects are omitted.

    """
    material, palette = rasterize(state, camera, cfg)
    centroids = {}
    for index, entry in enumerate(palette):
        if entry["material"].startswith("object:"):
            vs, us = np.nonzero(material == index)
            if len(us):
                centroids[entry["material"][len("object:"):]] = (float(us.mean()), float(vs.mean()))
    return centroids
