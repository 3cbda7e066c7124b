# -*- coding: utf-8 -*-
"""CompSim module containing the Python object models shared by every pipeline stage.

Each model is built from a plain dictionary (as parsed from JSON) so that everything the pipeline persists can be read
back into the same types with :meth:`CompSimObject.from_json`. Numerical arrays (frames, conditioning windows) live on
the models that need them and are compared by value.

Attributes:
    logger (Logger): Module level logger for usage and debugging.
    SHAPES (tuple[str]): Object shapes known to the tabletop world.
    SHAPE_THICKNESS (dict[str, float]): Height in meters of each shape, used for stacking and rendering.
    GRIPPER_COMMANDS (tuple[str]): Discrete gripper commands of a low-level action.
    CHANNELS (tuple[str]): Episode channel tags.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type, Union

import numpy as np
from stringcase import snakecase

from compsim.exceptions import CameraError, DatasetValidationError, PrimitiveError, SamplingError
from compsim.logger import get_logger
from compsim.utils import deep_equal, jsonify_data, jsonify_data_to_file, quantize9

logger = get_logger(__name__)

SHAPES = ("block", "bottle", "card", "pad")
SHAPE_THICKNESS = {"block": 0.04, "bottle": 0.12, "card": 0.005, "pad": 0.004}
GRIPPER_COMMANDS = ("hold", "open", "close")
PRIMITIVE_KINDS = ("MoveTo", "Grasp", "Release", "Lift", "Shake", "Push", "Stack")
TASK_NAMES = ("shake_bottle", "move_card_away", "stack_blocks_two", "place_pad", "handover")
INIT_REGIONS = ("in_domain", "ood_spatial")
OBJECT_VARIANTS = ("canonical", "ood_object")
BACKGROUND_VARIANTS = ("default", "colored")
CHANNELS = ("sim", "real", "pseudo")
SUITE_KINDS = ("in_domain", "ood_spatial", "ood_object")
REGIME_NAMES = ("r10", "r20", "sim200_pre_r10", "r10_sim200", "r10_pseudo200", "pseudo200")


def _as_model(model_class: Type, value: Any) -> Any:
    if value is None or isinstance(value, model_class):
        return value
    return model_class(value)


def _as_floats(values: Optional[Sequence[float]]) -> Optional[Tuple[float, ...]]:
    if values is None:
        return None
    return tuple(float(v) for v in values)


def _plain(value: Any) -> Any:
    if hasattr(value, "serialized"):
        return value.serialized()
    elif isinstance(value, np.ndarray):
        return value.tolist()
    elif isinstance(value, np.generic):
        return value.item()
    elif isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    elif isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


class CompSimObject(object):
    """Base CompSim data object from which all model classes inherit their methods and attributes.
    """

    def __init__(self, extracted_data: Optional[Dict]):
        """Instantiate a CompSim Object.

        Args:
            extracted_data (dict): Parsed JSON data (or keyword data) for the model.

        Attributes:
            extracted_data (dict): Parsed JSON data (or keyword data) for the model.

        """
        self._extracted_data: Dict = dict(extracted_data) if extracted_data else {}
        self._keys: List = list(self._extracted_data.keys())

    def __str__(self):
        """Override __str__ to display CompSimObject attribute values as JSON.
        """
        return f"{self.__class__.__name__}({self.to_json()})"

    def __repr__(self):
        """Override __repr__ to display CompSimObject attribute values as JSON.
        """
        return f"{self.__class__.__name__}({self.to_json()})"

    def __eq__(self, other):
        if not isinstance(other, self.__class__):
            return NotImplemented
        return deep_equal(self._equality_field_dict(), other._equality_field_dict())

    __hash__ = None

    def _equality_field_dict(self) -> Dict:
        return {k: v for k, v in self.__dict__.items() if not k.startswith("_")}

    @classmethod
    def type_key(cls) -> str:
        """Snake case key naming this model type in serialized files.

        Returns:
            str: Snake case class name.

        """
        return snakecase(cls.__name__)

    def clean_data_dict(self) -> Dict:
        """Collect the public attributes of the model for serialization.

        Returns:
            dict: Dictionary of public attribute names to values.

        """
        return {k: v for k, v in self.__dict__.items() if not k.startswith("_")}

    def serialized(self) -> Dict:
        """Pack up all object content into nested dictionaries for JSON serialization.

        Returns:
            dict: Serializable dictionary.

        """
        return {a: _plain(v) for a, v in self.clean_data_dict().items()}

    def to_json(self) -> str:
        """Serialize the class object to JSON.

        Returns:
            str: JSON string derived from the serializable version of the class object.

        """
        return jsonify_data(self.serialized())

    @classmethod
    def from_json(cls, json_data: Dict):
        """Deserialize JSON to a class object.

        Returns:
            object: Class object derived from JSON data.

        """
        return cls(json_data)


class ObjectInstance(CompSimObject):
    """Model class for a rigid object on the table.
    """

    def __init__(self, extracted_data):
        """Instantiate the ObjectInstance child class of CompSimObject.

        Args:
            extracted_data (dict): Object data.

        Attributes:
            id (str): Unique object id within a world.
            shape (str): One of block, bottle, card, pad.
            color (tuple[float]): RGB albedo in [0, 1].
            pose (tuple[float]): (x, y, z, yaw degrees); z is the elevation of the object's base.
            size (tuple[float]): Footprint (w, h) in meters.

        """
        CompSimObject.__init__(self, extracted_data)
        self.id: str = str(self._extracted_data.get("id", ""))
        self.shape: str = self._extracted_data.get("shape", "block")
        self.color: Tuple[float, ...] = _as_floats(self._extracted_data.get("color", (0.5, 0.5, 0.5)))
        self.pose: Tuple[float, ...] = _as_floats(self._extracted_data.get("pose", (0.0, 0.0, 0.0, 0.0)))
        self.size: Tuple[float, ...] = _as_floats(self._extracted_data.get("size", (0.04, 0.04)))

    @property
    def graspable(self) -> bool:
        return self.shape != "pad"

    @property
    def thickness(self) -> float:
        return SHAPE_THICKNESS[self.shape]

    @property
    def top(self) -> float:
        return self.pose[2] + self.thickness

    def with_pose(self, pose: Sequence[float]) -> "ObjectInstance":
        return ObjectInstance({
            "id": self.id, "shape": self.shape, "color": self.color, "pose": tuple(pose), "size": self.size
        })

    def footprint(self) -> np.ndarray:
        """Corners of the rotated footprint rectangle in world (x, y), counter-clockwise.

        Returns:
            np.ndarray: Array of shape (4, 2).

        """
        x, y, _, yaw = self.pose
        half_w, half_h = self.size[0] / 2.0, self.size[1] / 2.0
        c, s = math.cos(math.radians(yaw)), math.sin(math.radians(yaw))
        local = np.array([[-half_w, -half_h], [half_w, -half_h], [half_w, half_h], [-half_w, half_h]])
        rotation = np.array([[c, -s], [s, c]])
        return local @ rotation.T + np.array([x, y])

    def contains_xy(self, x: float, y: float, tolerance: float = 1e-9) -> bool:
        ox, oy, _, yaw = self.pose
        c, s = math.cos(math.radians(yaw)), math.sin(math.radians(yaw))
        dx, dy = x - ox, y - oy
        local_x = c * dx + s * dy
        local_y = -s * dx + c * dy
        return abs(local_x) <= self.size[0] / 2.0 + tolerance and abs(local_y) <= self.size[1] / 2.0 + tolerance


class WorldState(CompSimObject):
    """Model class for the full tabletop simulator state.
    """

    def __init__(self, extracted_data):
        """Instantiate the WorldState child class of CompSimObject.

        Args:
            extracted_data (dict): World state data.

        Attributes:
            gripper_pose (tuple[float]): Gripper (x, y, z) in meters.
            gripper_open (bool): Whether the gripper is open.
            held_object (str | None): Id of the object held by the gripper.
            objects (list[ObjectInstance]): Objects on the table.
            step_index (int): Number of low-level actions applied since the initial state.
            receiver_pose (tuple[float] | None): Pose of the passive receiving gripper (handover tasks only).
            handover_object (str | None): Id of the object currently held by the receiver.
            background (str): Table appearance variant (default or colored).

        """
        CompSimObject.__init__(self, extracted_data)
        self.gripper_pose: Tuple[float, ...] = _as_floats(self._extracted_data.get("gripper_pose", (0.3, 0.3, 0.15)))
        self.gripper_open: bool = bool(self._extracted_data.get("gripper_open", True))
        self.held_object: Optional[str] = self._extracted_data.get("held_object", None)
        self.objects: List[ObjectInstance] = [
            _as_model(ObjectInstance, obj) for obj in self._extracted_data.get("objects", [])
        ]
        self.step_index: int = int(self._extracted_data.get("step_index", 0))
        self.receiver_pose: Optional[Tuple[float, ...]] = _as_floats(self._extracted_data.get("receiver_pose", None))
        self.handover_object: Optional[str] = self._extracted_data.get("handover_object", None)
        self.background: str = self._extracted_data.get("background", "default")

    def replace(self, **changes) -> "WorldState":
        data = {k: v for k, v in self.clean_data_dict().items()}
        data.update(changes)
        return WorldState(data)

    def object_by_id(self, object_id: str) -> Optional[ObjectInstance]:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        return None

    def object_ids(self) -> List[str]:
        return [obj.id for obj in self.objects]


class LowLevelAction(CompSimObject):
    """Model class for one simulator step command.
    """

    def __init__(self, extracted_data):
        """Instantiate the LowLevelAction child class of CompSimObject.

        Translations are quantized to 9 significant digits on construction so the CSV form of an action parses back to
        the identical action.

        Args:
            extracted_data (dict): Action data.

        Attributes:
            dx (float): Gripper x translation in meters.
            dy (float): Gripper y translation in meters.
            dz (float): Gripper z translation in meters.
            gripper_cmd (str): One of hold, open, close.

        """
        CompSimObject.__init__(self, extracted_data)
        self.dx: float = quantize9(self._extracted_data.get("dx", 0.0))
        self.dy: float = quantize9(self._extracted_data.get("dy", 0.0))
        self.dz: float = quantize9(self._extracted_data.get("dz", 0.0))
        self.gripper_cmd: str = self._extracted_data.get("gripper_cmd", "hold")
        if self.gripper_cmd not in GRIPPER_COMMANDS:
            raise ValueError(f"Unknown gripper command \"{self.gripper_cmd}\".")

    @classmethod
    def hold(cls) -> "LowLevelAction":
        return cls({"dx": 0.0, "dy": 0.0, "dz": 0.0, "gripper_cmd": "hold"})

    @classmethod
    def command(cls, gripper_cmd: str) -> "LowLevelAction":
        return cls({"dx": 0.0, "dy": 0.0, "dz": 0.0, "gripper_cmd": gripper_cmd})

    @property
    def delta(self) -> Tuple[float, float, float]:
        return self.dx, self.dy, self.dz

    def features(self, max_step: float) -> np.ndarray:
        """Encode the action as six features: translation in units of max_step followed by a one-hot command.

        Args:
            max_step (float): Per-step translation limit in meters.

        Returns:
            np.ndarray: float32 vector of length 6.

        """
        one_hot = [1.0 if self.gripper_cmd == cmd else 0.0 for cmd in GRIPPER_COMMANDS]
        return np.array([self.dx / max_step, self.dy / max_step, self.dz / max_step] + one_hot, dtype=np.float32)

    @classmethod
    def from_features(cls, features: Sequence[float], max_step: float) -> "LowLevelAction":
        """Decode a six-feature vector (clipping translations to the step limit).

        Args:
            features (Sequence[float]): Feature vector as produced by :meth:`features`.
            max_step (float): Per-step translation limit in meters.

        Returns:
            LowLevelAction: Decoded action.

        """
        motion = np.clip(np.asarray(features[:3], dtype=np.float64), -1.0, 1.0) * max_step
        command = GRIPPER_COMMANDS[int(np.argmax(np.asarray(features[3:6])))]
        return cls({"dx": motion[0], "dy": motion[1], "dz": motion[2], "gripper_cmd": command})


class Primitive(CompSimObject):
    """Model class for an action primitive.
    """

    def __init__(self, extracted_data):
        """Instantiate the Primitive child class of CompSimObject.

        Args:
            extracted_data (dict): Primitive data.

        Attributes:
            kind (str): One of MoveTo, Grasp, Release, Lift, Shake, Push, Stack.
            target (str | tuple[float] | None): Object id or (x, y, z) point.
            params (dict): Kind-specific parameters (for example shake cycles n and amplitude).

        """
        CompSimObject.__init__(self, extracted_data)
        self.kind: str = self._extracted_data.get("kind", "")
        target = self._extracted_data.get("target", None)
        self.target: Union[str, Tuple[float, ...], None] = (
            tuple(float(v) for v in target) if isinstance(target, (list, tuple)) else target
        )
        self.params: Dict[str, Any] = dict(self._extracted_data.get("params", {}))

    def validate(self) -> None:
        if self.kind not in PRIMITIVE_KINDS:
            raise PrimitiveError(f"Unknown primitive kind \"{self.kind}\".", payload=self.serialized())
        if self.kind == "Shake":
            if int(self.params.get("n", 0)) < 1 or float(self.params.get("amplitude", 0.0)) <= 0.0:
                raise PrimitiveError("Shake requires n >= 1 and amplitude > 0.", payload=self.serialized())
        if self.kind in ("Grasp", "Push", "Stack") and not isinstance(self.target, str):
            raise PrimitiveError(f"{self.kind} requires an object id target.", payload=self.serialized())
        if self.kind == "Push" and len(self.params.get("to", ())) != 2:
            raise PrimitiveError("Push requires a destination \"to\" of (x, y).", payload=self.serialized())

    def describe(self) -> str:
        target = self.target if isinstance(self.target, str) or self.target is None else tuple(
            round(v, 4) for v in self.target)
        return f"{self.kind}({target})"


class TaskSpec(CompSimObject):
    """Model class for a task variant.
    """

    def __init__(self, extracted_data):
        """Instantiate the TaskSpec child class of CompSimObject.

        Args:
            extracted_data (dict): Task data.

        Attributes:
            name (str): Task template name.
            init_region (str): in_domain or ood_spatial.
            object_variant (str): canonical or ood_object.
            clutter (bool): Whether distractor blocks are added.
            background_variant (str): default or colored.

        """
        CompSimObject.__init__(self, extracted_data)
        self.name: str = self._extracted_data.get("name", "")
        self.init_region: str = self._extracted_data.get("init_region", "in_domain")
        self.object_variant: str = self._extracted_data.get("object_variant", "canonical")
        self.clutter: bool = bool(self._extracted_data.get("clutter", False))
        self.background_variant: str = self._extracted_data.get("background_variant", "default")

    @property
    def label(self) -> str:
        """Task variant label, e.g. move_card_away_cluttered or place_pad_colored.
        """
        return self.name + ("_cluttered" if self.clutter else "") + (
            "_colored" if self.background_variant == "colored" else "")

    @classmethod
    def from_label(cls, label: str, init_region: str = "in_domain", object_variant: str = "canonical") -> "TaskSpec":
        name, clutter, background = label, False, "default"
        if name.endswith("_colored"):
            name, background = name[:-len("_colored")], "colored"
        if name.endswith("_cluttered"):
            name, clutter = name[:-len("_cluttered")], True
        return cls({
            "name": name, "init_region": init_region, "object_variant": object_variant, "clutter": clutter,
            "background_variant": background
        })

    def validate(self) -> None:
        problems = []
        if self.name not in TASK_NAMES:
            problems.append(f"name \"{self.name}\" not in {TASK_NAMES}")
        if self.init_region not in INIT_REGIONS:
            problems.append(f"init_region \"{self.init_region}\" not in {INIT_REGIONS}")
        if self.object_variant not in OBJECT_VARIANTS:
            problems.append(f"object_variant \"{self.object_variant}\" not in {OBJECT_VARIANTS}")
        if self.background_variant not in BACKGROUND_VARIANTS:
            problems.append(f"background_variant \"{self.background_variant}\" not in {BACKGROUND_VARIANTS}")
        if problems:
            raise ValueError("Invalid task: " + "; ".join(problems))


class Trajectory(CompSimObject):
    """Model class for a scheduled demonstration.
    """

    def __init__(self, extracted_data):
        """Instantiate the Trajectory child class of CompSimObject.

        Args:
            extracted_data (dict): Trajectory data.

        Attributes:
            actions (list[LowLevelAction]): Low-level actions.
            states (list[WorldState]): States, one more than actions.
            task (TaskSpec): Task variant the trajectory solves.
            seed (int): Scheduling seed.
            primitives (list[Primitive]): Primitive log emitted by the scheduler.

        """
        CompSimObject.__init__(self, extracted_data)
        self.actions: List[LowLevelAction] = [
            _as_model(LowLevelAction, a) for a in self._extracted_data.get("actions", [])]
        self.states: List[WorldState] = [_as_model(WorldState, s) for s in self._extracted_data.get("states", [])]
        self.task: TaskSpec = _as_model(TaskSpec, self._extracted_data.get("task", {}))
        self.seed: int = int(self._extracted_data.get("seed", 0))
        self.primitives: List[Primitive] = [
            _as_model(Primitive, p) for p in self._extracted_data.get("primitives", [])]


class Intrinsics(CompSimObject):
    """Model class for pinhole intrinsics.
    """

    def __init__(self, extracted_data):
        CompSimObject.__init__(self, extracted_data)
        self.fx: float = float(self._extracted_data.get("fx", 0.0))
        self.fy: float = float(self._extracted_data.get("fy", 0.0))
        self.cx: float = float(self._extracted_data.get("cx", 0.0))
        self.cy: float = float(self._extracted_data.get("cy", 0.0))
        self.width: int = int(self._extracted_data.get("width", 64))
        self.height: int = int(self._extracted_data.get("height", 64))

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


class CameraModel(CompSimObject):
    """Model class for a calibrated pinhole camera (camera.json).
    """

    def __init__(self, extracted_data):
        """Instantiate the CameraModel child class of CompSimObject.

        Args:
            extracted_data (dict): Camera data in camera.json layout.

        Attributes:
            fx (float): Focal length along u in pixels.
            fy (float): Focal length along v in pixels.
            cx (float): Principal point u in pixels.
            cy (float): Principal point v in pixels.
            width (int): Image width in pixels.
            height (int): Image height in pixels.
            R (list[float]): World-to-camera rotation, row-major 9 floats.
            t (list[float]): World-to-camera translation in meters.

        """
        CompSimObject.__init__(self, extracted_data)
        self.fx: float = float(self._extracted_data.get("fx", 0.0))
        self.fy: float = float(self._extracted_data.get("fy", 0.0))
        self.cx: float = float(self._extracted_data.get("cx", 0.0))
        self.cy: float = float(self._extracted_data.get("cy", 0.0))
        self.width: int = int(self._extracted_data.get("width", 64))
        self.height: int = int(self._extracted_data.get("height", 64))
        self.R: List[float] = [float(v) for v in np.asarray(
            self._extracted_data.get("R", np.eye(3)), dtype=np.float64).reshape(9)]
        self.t: List[float] = [float(v) for v in np.asarray(
            self._extracted_data.get("t", (0.0, 0.0, 0.0)), dtype=np.float64).reshape(3)]

    @classmethod
    def from_parts(cls, intrinsics: Intrinsics, rotation: np.ndarray, translation: np.ndarray) -> "CameraModel":
        return cls({
            "fx": intrinsics.fx, "fy": intrinsics.fy, "cx": intrinsics.cx, "cy": intrinsics.cy,
            "width": intrinsics.width, "height": intrinsics.height,
            "R": np.asarray(rotation, dtype=np.float64).reshape(9), "t": np.asarray(translation, dtype=np.float64)
        })

    @property
    def rotation(self) -> np.ndarray:
        return np.array(self.R, dtype=np.float64).reshape(3, 3)

    @property
    def translation(self) -> np.ndarray:
        return np.array(self.t, dtype=np.float64)

    @property
    def resolution(self) -> Tuple[int, int]:
        return self.width, self.height

    @property
    def intrinsics(self) -> Intrinsics:
        return Intrinsics({
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy, "width": self.width, "height": self.height
        })

    def validate(self) -> None:
        if not (self.fx > 0 and self.fy > 0) or not all(math.isfinite(v) for v in (self.fx, self.fy, self.cx, self.cy)):
            raise CameraError(f"Degenerate camera: fx={self.fx}, fy={self.fy} must be positive and finite.")
        if self.width <= 0 or self.height <= 0:
            raise CameraError(f"Degenerate camera resolution {self.width}x{self.height}.")
        rotation = self.rotation
        if not np.allclose(rotation.T @ rotation, np.eye(3), atol=1e-9) or abs(np.linalg.det(rotation) - 1.0) > 1e-9:
            raise CameraError("Camera rotation is not a proper rotation matrix.")

    def to_json_file(self, camera_file: Union[Path, str]) -> Path:
        camera_file = Path(camera_file)
        camera_file.parent.mkdir(parents=True, exist_ok=True)
        with open(camera_file, "w", encoding="utf-8") as camera_json:
            jsonify_data_to_file(self, camera_json)
        return camera_file

    @classmethod
    def from_json_file(cls, camera_file: Union[Path, str]) -> "CameraModel":
        """Load and validate a camera.json file.

        Args:
            camera_file (Path | str): Path to camera.json.

        Returns:
            CameraModel: Validated camera.

        Raises:
            CameraError: When the file is missing fields or describes a degenerate camera.

        """
        with open(camera_file, "r", encoding="utf-8") as camera_json:
            data = json.load(camera_json)
        missing = [key for key in ("fx", "fy", "cx", "cy", "width", "height", "R", "t") if key not in data]
        if missing:
            raise CameraError(f"camera.json is missing fields {missing}.", path=str(camera_file))
        camera = cls.from_json(data)
        camera.validate()
        return camera

    def scaled(self, factor: int) -> "CameraModel":
        """Camera of an image upsampled by an integer factor (pixel centers stay at integer coordinates).

        Args:
            factor (int): Upsampling factor.

        Returns:
            CameraModel: Camera rendering factor-times larger images of the same view.

        """
        offset = (factor - 1) / 2.0
        data = self.serialized()
        data.update({
            "fx": self.fx * factor, "fy": self.fy * factor, "cx": self.cx * factor + offset,
            "cy": self.cy * factor + offset, "width": self.width * factor, "height": self.height * factor
        })
        return CameraModel(data)


class Checkerboard(CompSimObject):
    """Model class for a planar calibration checkerboard.
    """

    def __init__(self, extracted_data):
        """Instantiate the Checkerboard child class of CompSimObject.

        Args:
            extracted_data (dict): Board data.

        Attributes:
            inner_rows (int): Number of inner corner rows.
            inner_cols (int): Number of inner corners per row.
            square_size (float): Square edge in meters.
            origin (tuple[float]): World position of inner corner (0, 0).
            yaw (float): Board rotation about the world z axis in degrees.

        """
        CompSimObject.__init__(self, extracted_data)
        self.inner_rows: int = int(self._extracted_data.get("inner_rows", 6))
        self.inner_cols: int = int(self._extracted_data.get("inner_cols", 9))
        self.square_size: float = float(self._extracted_data.get("square_size", 0.04))
        self.origin: Tuple[float, ...] = _as_floats(self._extracted_data.get("origin", (0.14, 0.40, 0.0)))
        self.yaw: float = float(self._extracted_data.get("yaw", 0.0))

    @property
    def count(self) -> int:
        return self.inner_rows * self.inner_cols

    def validate(self) -> None:
        if self.inner_rows < 3 or self.inner_cols < 3:
            raise ValueError("A checkerboard needs at least 3 inner rows and 3 inner columns.")
        if self.square_size <= 0:
            raise ValueError("Checkerboard square_size must be positive.")

    def corner_points(self) -> np.ndarray:
        """World coordinates of the inner corners in row-major order.

        Returns:
            np.ndarray: Array of shape (inner_rows * inner_cols, 3).

        """
        c, s = math.cos(math.radians(self.yaw)), math.sin(math.radians(self.yaw))
        rows, cols = np.meshgrid(np.arange(self.inner_rows), np.arange(self.inner_cols), indexing="ij")
        local_x = cols.reshape(-1) * self.square_size
        local_y = -rows.reshape(-1) * self.square_size
        return np.stack([
            self.origin[0] + c * local_x - s * local_y,
            self.origin[1] + s * local_x + c * local_y,
            np.full(local_x.shape, self.origin[2])
        ], axis=1)


class CornerSet(CompSimObject):
    """Model class for 3D-2D checkerboard correspondences.
    """

    def __init__(self, extracted_data):
        """Instantiate the CornerSet child class of CompSimObject.

        Args:
            extracted_data (dict): Correspondence data.

        Attributes:
            points3d (list[list[float]]): World coordinates.
            points2d (list[list[float]]): Pixel coordinates (u, v).
            ordering (str): Ordering convention of the points.

        """
        CompSimObject.__init__(self, extracted_data)
        self.points3d: List[List[float]] = np.asarray(
            self._extracted_data.get("points3d", []), dtype=np.float64).reshape(-1, 3).tolist()
        self.points2d: List[List[float]] = np.asarray(
            self._extracted_data.get("points2d", []), dtype=np.float64).reshape(-1, 2).tolist()
        self.ordering: str = self._extracted_data.get("ordering", "row-major")

    @property
    def object_points(self) -> np.ndarray:
        return np.array(self.points3d, dtype=np.float64).reshape(-1, 3)

    @property
    def image_points(self) -> np.ndarray:
        return np.array(self.points2d, dtype=np.float64).reshape(-1, 2)

    def __len__(self):
        return len(self.points2d)


class AppearanceParams(CompSimObject):
    """Model class for the appearance gap between the simulator and the real channel.
    """

    def __init__(self, extracted_data):
        """Instantiate the AppearanceParams child class of CompSimObject.

        Args:
            extracted_data (dict): Appearance data.

        Attributes:
            color_remap (dict[str, tuple[float]]): Material (or shape:<shape>) to real-world RGB.
            lighting_direction (tuple[float]): Image-plane direction (u, v) of the brightness gradient.
            lighting_strength (float): Relative gain at the bright edge of the gradient.
            vignette_strength (float): Darkening at the image corners, in [0, 1].
            noise_sigma (float): Standard deviation of additive pixel noise.
            texture_seed (int): Seed of the static table texture.
            texture_strength (float): Amplitude of the static table texture.

        """
        CompSimObject.__init__(self, extracted_data)
        self.color_remap: Dict[str, Tuple[float, ...]] = {
            str(k): _as_floats(v) for k, v in self._extracted_data.get("color_remap", {}).items()
        }
        self.lighting_direction: Tuple[float, ...] = _as_floats(
            self._extracted_data.get("lighting_direction", (1.0, 1.0)))
        self.lighting_strength: float = float(self._extracted_data.get("lighting_strength", 0.0))
        self.vignette_strength: float = float(self._extracted_data.get("vignette_strength", 0.0))
        self.noise_sigma: float = float(self._extracted_data.get("noise_sigma", 0.0))
        self.texture_seed: int = int(self._extracted_data.get("texture_seed", 0))
        self.texture_strength: float = float(self._extracted_data.get("texture_strength", 0.0))

    @classmethod
    def identity(cls) -> "AppearanceParams":
        return cls({})

    def validate(self) -> None:
        problems = []
        if self.noise_sigma < 0:
            problems.append("noise_sigma must be >= 0")
        if not 0.0 <= self.vignette_strength <= 1.0:
            problems.append("vignette_strength must be in [0, 1]")
        if self.texture_strength < 0:
            problems.append("texture_strength must be >= 0")
        for material, rgb in self.color_remap.items():
            if len(rgb) != 3 or not all(0.0 <= v <= 1.0 for v in rgb):
                problems.append(f"color_remap[{material}] must be an RGB triple in [0, 1]")
        if problems:
            raise ValueError("Invalid appearance parameters: " + "; ".join(problems))


class GuidanceWeights(CompSimObject):
    """Model class for compositional guidance weights.
    """

    def __init__(self, extracted_data):
        """Instantiate the GuidanceWeights child class of CompSimObject.

        Args:
            extracted_data (dict): Weight data.

        Attributes:
            w_v (float): Visual-dynamics (sim frame window) weight.
            w_a (float): Control-dynamics (action window) weight.
            joint_mode (bool): Use one jointly conditioned score instead of two separately conditioned ones.

        """
        CompSimObject.__init__(self, extracted_data)
        self.w_v: float = float(self._extracted_data.get("w_v", 0.0))
        self.w_a: float = float(self._extracted_data.get("w_a", 0.0))
        self.joint_mode: bool = bool(self._extracted_data.get("joint_mode", False))

    def validate(self) -> None:
        for name, value in (("w_v", self.w_v), ("w_a", self.w_a)):
            if not math.isfinite(value) or value < 0:
                raise SamplingError(f"Guidance weight {name}={value} must be finite and non-negative.")

    @property
    def is_unconditional(self) -> bool:
        return self.w_v == 0.0 and self.w_a == 0.0


class ConditioningBundle(CompSimObject):
    """Model class for the two condition branches of one frame.
    """

    def __init__(self, extracted_data):
        """Instantiate the ConditioningBundle child class of CompSimObject.

        Args:
            extracted_data (dict): Bundle data.

        Attributes:
            visual (np.ndarray): Sim frame window, float32 (W_v, H, W, 3) in [0, 1].
            control (np.ndarray): Action feature window, float32 (W_a, 6).
            drop_visual (bool): Replace the visual branch with its learned null embedding.
            drop_control (bool): Replace the control branch with its learned null embedding.

        """
        CompSimObject.__init__(self, extracted_data)
        self.visual: np.ndarray = np.asarray(self._extracted_data.get("visual", np.zeros((0, 0, 0, 3))),
                                             dtype=np.float32)
        self.control: np.ndarray = np.asarray(self._extracted_data.get("control", np.zeros((0, 6))),
                                              dtype=np.float32)
        self.drop_visual: bool = bool(self._extracted_data.get("drop_visual", False))
        self.drop_control: bool = bool(self._extracted_data.get("drop_control", False))


class TrainReport(CompSimObject):
    """Model class for a neural simulator training summary.
    """

    def __init__(self, extracted_data):
        """Instantiate the TrainReport child class of CompSimObject.

        Args:
            extracted_data (dict): Report data.

        Attributes:
            epoch_losses (list[float]): Mean denoising loss per epoch.
            val_psnr (list[float]): Validation PSNR per epoch.
            val_ssim (list[float]): Validation SSIM per epoch.
            best_epoch (int): Epoch (1-based) whose parameters were kept.
            wall_time (float): Training wall time in seconds.
            seed (int): Training seed.
            train_pairs (list[str]): Pair keys used for training.
            val_pairs (list[str]): Pair keys held out for validation.

        """
        CompSimObject.__init__(self, extracted_data)
        self.epoch_losses: List[float] = [float(v) for v in self._extracted_data.get("epoch_losses", [])]
        self.val_psnr: List[float] = [float(v) for v in self._extracted_data.get("val_psnr", [])]
        self.val_ssim: List[float] = [float(v) for v in self._extracted_data.get("val_ssim", [])]
        self.best_epoch: int = int(self._extracted_data.get("best_epoch", 0))
        self.wall_time: float = float(self._extracted_data.get("wall_time", 0.0))
        self.seed: int = int(self._extracted_data.get("seed", 0))
        self.train_pairs: List[str] = list(self._extracted_data.get("train_pairs", []))
        self.val_pairs: List[str] = list(self._extracted_data.get("val_pairs", []))


class MetricReport(CompSimObject):
    """Model class for one metric over an evaluation suite.
    """

    def __init__(self, extracted_data):
        """Instantiate the MetricReport child class of CompSimObject.

        Args:
            extracted_data (dict): Report data.

        Attributes:
            metric (str): Metric name.
            constants (dict): Constants used by the metric.
            per_frame (dict[str, list[float]]): Values per frame keyed by pair key.
            per_episode (dict[str, float]): Mean per episode keyed by pair key.
            suite_mean (float): Mean over episodes.
            suite_std (float): Population standard deviation over episodes.

        """
        CompSimObject.__init__(self, extracted_data)
        self.metric: str = self._extracted_data.get("metric", "")
        self.constants: Dict[str, Any] = dict(self._extracted_data.get("constants", {}))
        self.per_frame: Dict[str, List[float]] = {
            k: [float(v) for v in values] for k, values in self._extracted_data.get("per_frame", {}).items()}
        self.per_episode: Dict[str, float] = {
            k: float(v) for k, v in self._extracted_data.get("per_episode", {}).items()}
        self.suite_mean: float = float(self._extracted_data.get("suite_mean", float("nan")))
        self.suite_std: float = float(self._extracted_data.get("suite_std", float("nan")))


class AlignmentReport(CompSimObject):
    """Model class for the result of checking a paired episode.
    """

    def __init__(self, extracted_data):
        CompSimObject.__init__(self, extracted_data)
        self.pair_key: str = self._extracted_data.get("pair_key", "")
        self.violations: List[Dict[str, Any]] = list(self._extracted_data.get("violations", []))

    @property
    def ok(self) -> bool:
        return len(self.violations) == 0

    def kinds(self) -> List[str]:
        return [v["kind"] for v in self.violations]


class Regime(CompSimObject):
    """Model class for a named policy data-mixture regime.
    """

    def __init__(self, extracted_data):
        """Instantiate the Regime child class of CompSimObject.

        Args:
            extracted_data (dict): Regime data.

        Attributes:
            name (str): Regime name.
            counts (dict[str, int]): Episodes consumed per source (real, sim, pseudo).
            order (str): joint (one mixed phase) or pretrain_finetune (synthetic first, then real).
            alpha (float): Probability that a joint-phase draw comes from the real set.

        """
        CompSimObject.__init__(self, extracted_data)
        self.name: str = self._extracted_data.get("name", "")
        self.counts: Dict[str, int] = {k: int(v) for k, v in self._extracted_data.get("counts", {}).items()}
        self.order: str = self._extracted_data.get("order", "joint")
        self.alpha: float = float(self._extracted_data.get("alpha", 1.0))

    @property
    def synthetic_source(self) -> Optional[str]:
        for source in ("sim", "pseudo"):
            if self.counts.get(source, 0) > 0:
                return source
        return None


class EvalSuite(CompSimObject):
    """Model class for a fixed set of seeded evaluation trials.
    """

    def __init__(self, extracted_data):
        """Instantiate the EvalSuite child class of CompSimObject.

        Args:
            extracted_data (dict): Suite data.

        Attributes:
            kind (str): in_domain, ood_spatial, or ood_object.
            trials (int): Number of trials.
            base_seed (int): Seed of the first trial; trial i uses base_seed + i.

        """
        CompSimObject.__init__(self, extracted_data)
        self.kind: str = self._extracted_data.get("kind", "in_domain")
        self.trials: int = int(self._extracted_data.get("trials", 30))
        self.base_seed: int = int(self._extracted_data.get("base_seed", 0))

    @property
    def seeds(self) -> List[int]:
        return [self.base_seed + i for i in range(self.trials)]

    def task_for(self, name: str) -> TaskSpec:
        return TaskSpec({
            "name": name,
            "init_region": "ood_spatial" if self.kind == "ood_spatial" else "in_domain",
            "object_variant": "ood_object" if self.kind == "ood_object" else "canonical"
        })


class StageManifest(CompSimObject):
    """Model class for the provenance record written by every pipeline stage.
    """

    def __init__(self, extracted_data):
        """Instantiate the StageManifest child class of CompSimObject.

        Args:
            extracted_data (dict): Manifest data.

        Attributes:
            stage (str): Stage name.
            status (str): complete once every output is written.
            config_hash (str): SHA-256 of the resolved configuration.
            seed (int): Global seed.
            inputs (dict[str, str]): Upstream stage name to its output digest.
            outputs (list[str]): Run-relative output paths.
            output_digest (str): Digest over the outputs, consumed by downstream stages.
            config (dict): Resolved configuration echo.

        """
        CompSimObject.__init__(self, extracted_data)
        self.stage: str = self._extracted_data.get("stage", "")
        self.status: str = self._extracted_data.get("status", "")
        self.config_hash: str = self._extracted_data.get("config_hash", "")
        self.seed: int = int(self._extracted_data.get("seed", 0))
        self.inputs: Dict[str, str] = dict(self._extracted_data.get("inputs", {}))
        self.outputs: List[str] = list(self._extracted_data.get("outputs", []))
        self.output_digest: str = self._extracted_data.get("output_digest", "")
        self.config: Dict[str, Any] = dict(self._extracted_data.get("config", {}))


def require_channel(channel: str) -> str:
    if channel not in CHANNELS:
        raise DatasetValidationError(f"Unknown channel tag \"{channel}\"", field="channel")
    return channel


RENDERERS = {"sim": "blockworld", "real": "realchannel", "pseudo": "neuralsim"}


def pair_key_for(task: TaskSpec, seed: int) -> str:
    """Key shared by every channel of one episode, e.g. move_card_away_cluttered-s00003.

    Args:
        task (TaskSpec): Task variant.
        seed (int): Episode seed.

    Returns:
        str: Pair key.

    """
    region = "" if task.init_region == "in_domain" else f"-{task.init_region}"
    variant = "" if task.object_variant == "canonical" else f"-{task.object_variant}"
    return f"{task.label}{region}{variant}-s{int(seed):05d}"


class EpisodeRecord(CompSimObject):
    """Model class for one episode in one channel.
    """

    def __init__(self, extracted_data):
        """Instantiate the EpisodeRecord child class of CompSimObject.

        Args:
            extracted_data (dict): Episode data.

        Attributes:
            episode_id (str): Unique id, <pair_key>-<channel>.
            task (TaskSpec): Task variant.
            seed (int): Episode seed.
            channel (str): sim, real, or pseudo.
            frames (np.ndarray): uint8 video of shape (num_steps + 1, H, W, 3).
            actions (list[LowLevelAction]): Low-level actions.
            states (list[WorldState]): State trace, one per frame.
            camera (CameraModel | None): Camera the frames were rendered with.
            camera_file (str | None): camera.json the camera was loaded from.
            provenance (dict): Renderer and source information.

        """
        CompSimObject.__init__(self, extracted_data)
        self.task: TaskSpec = _as_model(TaskSpec, self._extracted_data.get("task", {}))
        self.seed: int = int(self._extracted_data.get("seed", 0))
        self.channel: str = self._extracted_data.get("channel", "sim")
        self.episode_id: str = self._extracted_data.get("episode_id", None) or (
            f"{pair_key_for(self.task, self.seed)}-{self.channel}")
        self.frames: np.ndarray = np.asarray(self._extracted_data.get("frames", np.zeros((0, 0, 0, 3), np.uint8)))
        self.actions: List[LowLevelAction] = [
            _as_model(LowLevelAction, a) for a in self._extracted_data.get("actions", [])]
        self.states: List[WorldState] = [_as_model(WorldState, s) for s in self._extracted_data.get("states", [])]
        self.camera: Optional[CameraModel] = _as_model(CameraModel, self._extracted_data.get("camera", None))
        self.camera_file: Optional[str] = self._extracted_data.get("camera_file", None)
        self.provenance: Dict[str, Any] = dict(self._extracted_data.get("provenance", {}))

    def clean_data_dict(self) -> Dict:
        return {k: v for k, v in CompSimObject.clean_data_dict(self).items() if k != "frames"}

    @property
    def pair_key(self) -> str:
        return pair_key_for(self.task, self.seed)

    @property
    def num_steps(self) -> int:
        return len(self.actions)

    def with_channel(self, channel: str, frames: np.ndarray, provenance: Dict[str, Any]) -> "EpisodeRecord":
        """Copy of this episode in another channel (actions and states shared, frames replaced).

        Args:
            channel (str): New channel tag.
            frames (np.ndarray): uint8 frames of the new channel.
            provenance (dict): Provenance of the new channel.

        Returns:
            EpisodeRecord: New record with episode_id <pair_key>-<channel>.

        """
        return EpisodeRecord({
            "task": self.task, "seed": self.seed, "channel": channel, "frames": frames, "actions": self.actions,
            "states": self.states, "camera": self.camera, "camera_file": self.camera_file, "provenance": provenance
        })

    def validate(self) -> None:
        """Check the record invariants before it is written or used.

        Raises:
            DatasetValidationError: Naming the first field that violates an invariant.

        """
        require_channel(self.channel)
        if self.frames.dtype != np.uint8 or self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise DatasetValidationError(
                f"Episode {self.episode_id} frames must be uint8 of shape (N, H, W, 3), got {self.frames.dtype} "
                f"{self.frames.shape}", field="frames")
        if len(self.frames) != len(self.actions) + 1:
            raise DatasetValidationError(
                f"Episode {self.episode_id} has {len(self.frames)} frames for {len(self.actions)} actions",
                field="num_steps")
        if self.states and len(self.states) != len(self.frames):
            raise DatasetValidationError(
                f"Episode {self.episode_id} has {len(self.states)} states for {len(self.frames)} frames",
                field="states")
        renderer = self.provenance.get("renderer")
        if renderer is not None and renderer != RENDERERS[self.channel]:
            raise DatasetValidationError(
                f"Episode {self.episode_id} is tagged {self.channel} but was rendered by {renderer}", field="channel")


class PairedEpisode(CompSimObject):
    """Model class for the (sim video, real video, actions) training tuple.
    """

    def __init__(self, extracted_data):
        CompSimObject.__init__(self, extracted_data)
        self.sim: EpisodeRecord = _as_model(EpisodeRecord, self._extracted_data.get("sim", None))
        self.real: EpisodeRecord = _as_model(EpisodeRecord, self._extracted_data.get("real", None))

    @property
    def actions(self) -> List[LowLevelAction]:
        return self.sim.actions

    @property
    def pair_key(self) -> str:
        return self.sim.pair_key

    def validate(self) -> None:
        if self.sim.actions != self.real.actions:
            raise DatasetValidationError(f"Pair {self.pair_key} channels disagree on actions", field="actions")
        if len(self.sim.frames) != len(self.real.frames):
            raise DatasetValidationError(f"Pair {self.pair_key} channels disagree on frame count", field="frames")


class DatasetIndex(CompSimObject):
    """Model class for index.json, the list of episodes under one dataset root.
    """

    def __init__(self, extracted_data):
        """Instantiate the DatasetIndex child class of CompSimObject.

        Args:
            extracted_data (dict): Index data.

        Attributes:
            root (str): Dataset root directory.
            episodes (list[dict]): Entries with episode_id, channel, pair_key, and task label, sorted by episode_id.
            digest (str): SHA-256 over the canonical episode list.

        """
        CompSimObject.__init__(self, extracted_data)
        self.root: str = str(self._extracted_data.get("root", ""))
        self.episodes: List[Dict[str, Any]] = sorted(
            (dict(e) for e in self._extracted_data.get("episodes", [])), key=lambda e: e["episode_id"])
        self.digest: str = self._extracted_data.get("digest", "")

    def __len__(self):
        return len(self.episodes)

    def ids(self, channel: Optional[str] = None) -> List[str]:
        return [e["episode_id"] for e in self.episodes if channel is None or e["channel"] == channel]

    def by_pair_key(self, channel: str) -> Dict[str, str]:
        return {e["pair_key"]: e["episode_id"] for e in self.episodes if e["channel"] == channel}

    def episode_path(self, episode_id: str) -> Path:
        return Path(self.root) / episode_id


class MixtureSpec(CompSimObject):
    """Model class for a real/synthetic data mixture.
    """

    def __init__(self, extracted_data):
        """Instantiate the MixtureSpec child class of CompSimObject.

        Args:
            extracted_data (dict): Mixture data.

        Attributes:
            alpha (float): Probability that a draw comes from the real set.
            real_set (list[str]): Episode ids of the real set.
            pseudo_set (list[str]): Episode ids of the synthetic set.
            seed (int): Sampling seed.
            synthetic_channel (str): Channel tag of the synthetic set (pseudo, or sim for sim-augmented regimes).

        """
        CompSimObject.__init__(self, extracted_data)
        self.alpha: float = float(self._extracted_data.get("alpha", 1.0))
        self.real_set: List[str] = self._ids(self._extracted_data.get("real_set", []), "real")
        self.pseudo_set: List[str] = self._ids(self._extracted_data.get("pseudo_set", []), None)
        self.seed: int = int(self._extracted_data.get("seed", 0))
        self.synthetic_channel: str = self._extracted_data.get("synthetic_channel", "pseudo")

    @staticmethod
    def _ids(value: Any, channel: Optional[str]) -> List[str]:
        if isinstance(value, DatasetIndex):
            return value.ids(channel) if channel else [e["episode_id"] for e in value.episodes
                                                       if e["channel"] in ("sim", "pseudo")]
        return [str(v) for v in value]

    @classmethod
    def from_counts(cls, real_count: int, synthetic_count: int, **kwargs) -> "MixtureSpec":
        """Mixture whose alpha reproduces uniform sampling over the union of the two sets.

        Args:
            real_count (int): Size of the real set.
            synthetic_count (int): Size of the synthetic set.
            **kwargs: Remaining MixtureSpec fields.

        Returns:
            MixtureSpec: Mixture with alpha = real_count / (real_count + synthetic_count).

        """
        total = real_count + synthetic_count
        return cls(dict(kwargs, alpha=real_count / total if total else 1.0))
