# -*- coding: utf-8 -*-
"""CompSim module for the self-describing model checkpoint container.

A checkpoint is a directory holding two files:

    checkpoint.json
        Header with the format tag, the tensor table (name, shape, offset, count), and free-form sections such as the
        noise schedule, the architecture, the training configuration echo, and serialized metadata models.
    weights.bin
        Every tensor of the table, concatenated as little-endian 32-bit floats.

Attributes:
    logger (Logger): Module level logger for usage and debugging.
    FORMAT_TAG (str): Value of the header "format" field.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import json
import os
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import torch
from torch import nn

from compsim.exceptions import CheckpointError
from compsim.logger import get_logger
from compsim.models import CompSimObject
from compsim.utils import jsonify_data_to_file, sha256_file, unpack_model

logger = get_logger(__name__)

FORMAT_TAG = "compsim-checkpoint"
FORMAT_VERSION = 1
HEADER_FILE = "checkpoint.json"
WEIGHTS_FILE = "weights.bin"
WEIGHTS_DTYPE = np.dtype("<f4")


def module_arrays(module: nn.Module) -> "OrderedDict[str, np.ndarray]":
    """Copy the parameters and buffers of a module into float32 arrays, in state dict order.

    Args:
        module (nn.Module): Torch module.

    Returns:
        OrderedDict[str, np.ndarray]: Tensor name to array.

    """
    return OrderedDict(
        (name, tensor.detach().cpu().numpy().astype(WEIGHTS_DTYPE)) for name, tensor in module.state_dict().items()
    )


def save_checkpoint(directory: Union[Path, str], tensors: Dict[str, np.ndarray],
                    header: Optional[Dict[str, Any]] = None) -> Path:
    """Write a checkpoint directory.

    Args:
        directory (Path | str): Output directory (created when missing).
        tensors (dict[str, np.ndarray]): Named tensors, written in iteration order.
        header (dict, optional): Additional header sections. CompSimObject values are stored under their type key so
            :func:`load_checkpoint` can restore them.

    Returns:
        Path: The checkpoint directory.

    Raises:
        CheckpointError: When a tensor holds non-finite values.

    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    table = []
    offset = 0
    temporary_weights = directory / f".{WEIGHTS_FILE}.{os.getpid()}.tmp"
    with open(temporary_weights, "wb") as weights_file:
        for name, array in tensors.items():
            array = np.ascontiguousarray(np.asarray(array, dtype=WEIGHTS_DTYPE))
            if not np.all(np.isfinite(array)):
                raise CheckpointError(f"Tensor {name} holds non-finite values.", path=str(directory))
            weights_file.write(array.tobytes(order="C"))
            table.append({"name": name, "shape": list(array.shape), "offset": offset, "count": int(array.size)})
            offset += int(array.size)
    os.replace(temporary_weights, directory / WEIGHTS_FILE)

    sections = {}
    for key, value in (header or {}).items():
        sections[key] = {value.type_key(): value.serialized()} if isinstance(value, CompSimObject) else value
    content = dict(sections, format=FORMAT_TAG, version=FORMAT_VERSION, dtype="float32-le", tensors=table,
                   weights_sha256=sha256_file(directory / WEIGHTS_FILE))
    with open(directory / HEADER_FILE, "w", encoding="utf-8") as header_file:
        jsonify_data_to_file(content, header_file)
    logger.debug(f"Saved checkpoint with {len(table)} tensors ({offset} floats) to {directory}.")
    return directory


def load_checkpoint(directory: Union[Path, str],
                    expected_shapes: Optional[Dict[str, Tuple[int, ...]]] = None
                    ) -> Tuple[Dict[str, Any], "OrderedDict[str, np.ndarray]"]:
    """Read a checkpoint directory.

    Args:
        directory (Path | str): Checkpoint directory.
        expected_shapes (dict[str, tuple[int]], optional): Required tensor names and shapes.

    Returns:
        tuple[dict, OrderedDict[str, np.ndarray]]: Header (metadata sections restored to their model classes) and the
        named tensors.

    Raises:
        CheckpointError: When files are missing or corrupt, or a tensor is missing or has an unexpected shape.

    """
    directory = Path(directory)
    header_path, weights_path = directory / HEADER_FILE, directory / WEIGHTS_FILE
    if not header_path.is_file() or not weights_path.is_file():
        raise CheckpointError(f"No checkpoint found in {directory} (expected {HEADER_FILE} and {WEIGHTS_FILE}).",
                              path=str(directory))
    with open(header_path, "r", encoding="utf-8") as header_file:
        try:
            header = json.load(header_file)
        except json.JSONDecodeError as err:
            raise CheckpointError(f"{HEADER_FILE} is not valid JSON: {err}", path=str(directory))
    if header.get("format") != FORMAT_TAG:
        raise CheckpointError(f"Unknown checkpoint format \"{header.get('format')}\".", path=str(directory))
    if header.get("weights_sha256") and header["weights_sha256"] != sha256_file(weights_path):
        raise CheckpointError(f"{WEIGHTS_FILE} does not match the digest recorded in {HEADER_FILE}.",
                              path=str(directory))

    flat = np.fromfile(weights_path, dtype=WEIGHTS_DTYPE)
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for entry in header.get("tensors", []):
        start, count = int(entry["offset"]), int(entry["count"])
        if start + count > flat.size or int(np.prod(entry["shape"], dtype=np.int64)) != count:
            raise CheckpointError(f"Tensor {entry['name']} lies outside {WEIGHTS_FILE} or has an inconsistent shape.",
                                  path=str(directory))
        tensors[entry["name"]] = flat[start:start + count].reshape(entry["shape"]).copy()

    if expected_shapes is not None:
        for name, shape in expected_shapes.items():
            if name not in tensors:
                raise CheckpointError(f"Checkpoint is missing tensor {name}.", path=str(directory))
            if tuple(tensors[name].shape) != tuple(shape):
                raise CheckpointError(
                    f"Tensor {name} has shape {tuple(tensors[name].shape)}, expected {tuple(shape)}.",
                    path=str(directory))
        unexpected = sorted(set(tensors) - set(expected_shapes))
        if unexpected:
            raise CheckpointError(f"Checkpoint holds unexpected tensors {unexpected[:5]}.", path=str(directory))

    restored = {key: unpack_model(value, CompSimObject) if isinstance(value, dict) else value
                for key, value in header.items()}
    return restored, tensors


def save_module(directory: Union[Path, str], module: nn.Module, header: Optional[Dict[str, Any]] = None) -> Path:
    return save_checkpoint(directory, module_arrays(module), header)


def load_module(directory: Union[Path, str], module: nn.Module) -> Dict[str, Any]:
    """Load a checkpoint into an already constructed module.

    Args:
        directory (Path | str): Checkpoint directory.
        module (nn.Module): Module whose architecture the checkpoint must match.

    Returns:
        dict: Checkpoint header.

    Raises:
        CheckpointError: On any missing tensor or shape mismatch.

    """
    expected = {name: tuple(tensor.shape) for name, tensor in module.state_dict().items()}
    header, tensors = load_checkpoint(directory, expected)
    module.load_state_dict(OrderedDict((name, torch.from_numpy(array)) for name, array in tensors.items()))
    return header
