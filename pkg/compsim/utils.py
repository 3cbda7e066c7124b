# -*- coding: utf-8 -*-
"""CompSim module for JSON handling, hashing, seeding, and frame conversion helpers.

Attributes:
    logger (Logger): Module level logger for usage and debugging.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, IO, Sequence, Type, Union

import numpy as np
import stringcase

from compsim.logger import get_logger

logger = get_logger(__name__)


def complex_json_handler(obj: Any) -> Any:
    """Custom handler to allow custom CompSim objects, numpy values, and paths to be serialized into JSON.

    Args:
        obj (Any): Unserializable Python object to be serialized into JSON.

    Returns:
        Any: Serializable version of the Python object.

    """
    if hasattr(obj, "serialized"):
        return obj.serialized()
    elif isinstance(obj, np.ndarray):
        return obj.tolist()
    elif isinstance(obj, np.generic):
        return obj.item()
    elif isinstance(obj, Path):
        return str(obj)
    else:
        try:
            return str(obj, "utf-8")
        except TypeError:
            raise TypeError('Object of type %s with value of %s is not JSON serializable' % (type(obj), repr(obj)))


def jsonify_data(data: object) -> str:
    """Function to serialize a CompSimObject to a JSON string.

    Args:
        data (object): CompSimObject to be serialized to a JSON string.

    Returns:
        str: JSON string serialized from CompSimObject.

    """
    return json.dumps(data, indent=2, ensure_ascii=False, default=complex_json_handler)


def jsonify_data_to_file(data: object, data_file: IO[str]) -> None:
    """Function to serialize a CompSimObject to JSON and output it to a file.

    Args:
        data (object): CompSimObject to be serialized to JSON and output to a file.
        data_file (IO[str]): Open text file handle.

    """
    json.dump(data, data_file, indent=2, ensure_ascii=False, default=complex_json_handler)


def prettify_data(data: object) -> str:
    """Function to return pretty formatted JSON strings for easily readable output from objects.

    Args:
        data (object): Data object to be printed as an easily readable JSON string.

    Returns:
        str: JSON string that has been formatted with indents (two spaces).

    """
    return f"\n{jsonify_data(data)}\n"


def canonical_json(data: object) -> str:
    """Serialize data to compact JSON with sorted keys so equal content always yields equal text.

    Args:
        data (object): Data to serialize.

    Returns:
        str: Canonical JSON string.

    """
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=True, default=complex_json_handler)


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(file_path: Union[Path, str]) -> str:
    digest = hashlib.sha256()
    with open(file_path, "rb") as data_file:
        for chunk in iter(lambda: data_file.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def tree_digest(paths: Sequence[Union[Path, str]], base: Union[Path, str]) -> str:
    """Digest over the relative paths and contents of every file under the given files or directories.

    Args:
        paths (Sequence[Path | str]): Files or directories (missing paths are recorded as missing).
        base (Path | str): Directory the recorded paths are relative to.

    Returns:
        str: Hex SHA-256 digest.

    """
    base = Path(base)
    entries = []
    for path in sorted(Path(p) for p in paths):
        files = sorted(f for f in path.rglob("*") if f.is_file()) if path.is_dir() else [path]
        for file_path in files:
            relative = file_path.relative_to(base).as_posix()
            entries.append([relative, sha256_file(file_path) if file_path.is_file() else None])
    return config_hash(entries)


def config_hash(data: object) -> str:
    """Hash a configuration (or any JSON-serializable object) by its canonical JSON.

    Args:
        data (object): Configuration data.

    Returns:
        str: Hex SHA-256 digest.

    """
    return sha256_bytes(canonical_json(data).encode("utf-8"))


def derive_seed(*parts: Any) -> int:
    """Derive a stable 63-bit integer seed from any JSON-serializable parts.

    Python's builtin hash is salted per process, so seeds are derived from a SHA-256 digest instead.

    Args:
        *parts (Any): Values identifying the random stream (global seed, labels, indices).

    Returns:
        int: Non-negative integer seed.

    """
    return int(sha256_bytes(canonical_json(list(parts)).encode("utf-8"))[:16], 16) & ((1 << 63) - 1)


def format_float9(value: float) -> str:
    return f"{float(value):.9g}"


def quantize9(value: float) -> float:
    """Round a float to 9 significant digits so that its 9-digit text form parses back to the identical float.

    Args:
        value (float): Raw value.

    Returns:
        float: Quantized value (negative zero normalized to zero).

    """
    quantized = float(format_float9(value))
    return 0.0 if quantized == 0.0 else quantized


def to_uint8(frame: np.ndarray) -> np.ndarray:
    """Convert a [0, 1] float frame to 8-bit RGB.

    Args:
        frame (np.ndarray): Float frame of shape (H, W, 3).

    Returns:
        np.ndarray: uint8 frame of the same shape.

    """
    if frame.dtype == np.uint8:
        return frame
    return np.round(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8)


def to_unit(frame: np.ndarray) -> np.ndarray:
    """Convert an 8-bit frame to float64 values in [0, 1] (float frames pass through as float64).

    Args:
        frame (np.ndarray): Frame of shape (..., 3).

    Returns:
        np.ndarray: float64 frame.

    """
    if frame.dtype == np.uint8:
        return frame.astype(np.float64) / 255.0
    return np.asarray(frame, dtype=np.float64)


def deep_equal(a: Any, b: Any) -> bool:
    """Structural equality that treats numpy arrays by value (shape, dtype, and contents).

    Args:
        a (Any): First value.
        b (Any): Second value.

    Returns:
        bool: True when both values are equal element for element.

    """
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        if not (isinstance(a, np.ndarray) and isinstance(b, np.ndarray)):
            return False
        return a.shape == b.shape and a.dtype == b.dtype and bool(np.array_equal(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(deep_equal(a[k], b[k]) for k in a)
    if isinstance(a, (list, tuple)) and isinstance(b, (list, tuple)):
        return len(a) == len(b) and all(deep_equal(x, y) for x, y in zip(a, b))
    return a == b


def unpack_model(json_obj: Dict[str, Any], parent_class: Type) -> Any:
    """Cast a single-key JSON dictionary of the form {"snake_case_type_name": {...}} to the matching model class.

    Args:
        json_obj (dict[str, Any]): JSON dictionary keyed by the snake case name of a subclass of parent_class.
        parent_class (Type): Parent class whose subclasses are candidates for casting.

    Returns:
        object: Instance of the matching subclass, or the original data if no subclass matches.

    """
    subclasses = {stringcase.snakecase(cls.__name__): cls for cls in parent_class.__subclasses__()}
    if isinstance(json_obj, dict) and len(json_obj) == 1:
        type_key, content = next(iter(json_obj.items()))
        if type_key in subclasses and isinstance(content, dict):
            return subclasses[type_key](content)
    logger.debug(f"No model type found for keys {list(json_obj.keys()) if isinstance(json_obj, dict) else None}.")
    return json_obj
