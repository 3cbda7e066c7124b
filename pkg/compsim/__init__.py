__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

from compsim.config import ExperimentConfig, default_config, load_config
from compsim.exceptions import CompSimException, CompSimValidationError, ConfigValidationError, \
    DatasetValidationError, StageDependencyError
from compsim.logger import get_logger
from compsim.models import ObjectInstance, WorldState, LowLevelAction, Primitive, TaskSpec, Trajectory, \
    Intrinsics, CameraModel, Checkerboard, CornerSet, AppearanceParams, GuidanceWeights, ConditioningBundle, \
    TrainReport, MetricReport, AlignmentReport, Regime, EvalSuite, StageManifest, EpisodeRecord, PairedEpisode, \
    DatasetIndex, MixtureSpec
from compsim.dataset import EpisodeStore
from compsim.pipeline import Pipeline, run_pipeline
