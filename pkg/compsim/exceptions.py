# -*- coding: utf-8 -*-
"""CompSim module for throwing custom exceptions.

Attributes:
    logger (Logger): Module level logger for usage and debugging.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

from typing import Any, List, Optional

from compsim.logger import get_logger

logger = get_logger(__name__)


class CompSimException(Exception):
    """Base CompSim exception class for all pipeline exceptions.
    """
    def __init__(self, message: str, payload: Any = None, path: Optional[str] = None):
        """Instantiate CompSim exception.

        Args:
            message (str): Human readable string describing the exception.
            payload (Any, optional): Diagnostic data attached to the exception.
            path (str, optional): Filesystem path of the artifact involved, when there is one.

        Attributes:
            message (str): Human readable string describing the exception.
            payload (Any): Diagnostic data attached to the exception.
            path (str): Filesystem path of the artifact involved.

        """
        super().__init__(message)
        self.message: str = message
        self.payload: Any = payload
        self.path: Optional[str] = str(path) if path is not None else None

    def __str__(self):
        return str(self.message)


class CompSimValidationError(CompSimException):
    """CompSim exception for invalid input (configuration, dataset schema, stage prerequisites)."""


class ConfigValidationError(CompSimValidationError):
    """CompSim exception listing every problem found in an experiment configuration.
    """
    def __init__(self, errors: List[str], path: Optional[str] = None):
        self.errors: List[str] = list(errors)
        super().__init__(
            f"Invalid experiment configuration ({len(self.errors)} problem(s)):\n  " + "\n  ".join(self.errors),
            payload=self.errors,
            path=path
        )


class DatasetValidationError(CompSimValidationError):
    """CompSim exception for episode data that does not match the on-disk schema.
    """
    def __init__(self, message: str, field: Optional[str] = None, path: Optional[str] = None):
        self.field: Optional[str] = field
        super().__init__(f"{message} (field: {field})" if field else message, payload=field, path=path)


class StageDependencyError(CompSimValidationError):
    """CompSim exception when a pipeline stage runs before the artifacts it needs exist.
    """
    def __init__(self, stage: str, missing: str, required_stage: Optional[str] = None):
        self.stage: str = stage
        self.missing: str = str(missing)
        self.required_stage: Optional[str] = required_stage
        hint = f" (run stage \"{required_stage}\" first)" if required_stage else ""
        super().__init__(
            f"Stage \"{stage}\" is missing required artifact {self.missing}{hint}.",
            payload={"stage": stage, "required_stage": required_stage},
            path=self.missing
        )


class BoundsError(CompSimException):
    """CompSim exception when a low-level action exceeds the per-step magnitude limit."""


class PrimitiveError(CompSimException):
    """CompSim exception when an action primitive cannot be compiled in the given world state."""


class GenerationError(CompSimException):
    """CompSim exception when no successful trajectory is found within the retry budget."""


class CameraError(CompSimException):
    """CompSim exception for degenerate camera models."""


class ProjectionError(CompSimException):
    """CompSim exception when a point cannot be projected (nonpositive depth)."""


class DetectionError(CompSimException):
    """CompSim exception when checkerboard corners cannot be detected."""


class CalibrationError(CompSimException):
    """CompSim exception for degenerate PnP configurations."""


class AlbedoError(CompSimException):
    """CompSim exception when albedo is requested from an empty patch."""


class EpisodeCollisionError(CompSimException):
    """CompSim exception when writing an episode whose id already exists."""


class MixtureError(CompSimException):
    """CompSim exception for invalid data mixture specifications."""


class TrainingError(CompSimException):
    """CompSim exception for diverged training runs.
    """
    def __init__(self, message: str, payload: Any = None, path: Optional[str] = None, checkpoint: Any = None):
        super().__init__(message, payload=payload, path=path)
        self.checkpoint: Any = checkpoint


class SamplingError(CompSimException):
    """CompSim exception for invalid diffusion inputs (schedule index, guidance weights, parameters)."""


class CheckpointError(CompSimException):
    """CompSim exception for unreadable or mismatched checkpoints."""


class MetricError(CompSimException):
    """CompSim exception for invalid metric inputs."""


class PolicyError(CompSimException):
    """CompSim exception for policy training and evaluation problems."""
