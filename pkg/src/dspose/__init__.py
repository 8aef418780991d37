"""Dual-source patch CNN for 2D human pose estimation, in plain numpy."""

from .evaluation import average_precision, detection_ap, pcp, pdj_curve
from .geometry import Patch, denormalize_joint, normalize_joint, visibility
from .inference import InferenceConfig, combine_outputs, estimate_pose
from .network import LayerSpec, forward, init_params, load_checkpoint, save_checkpoint
from .sampling import SamplingConfig
from .synth import FigureConfig, generate_figure
from .training import TrainConfig, collect_pairs, train

__version__ = "0.1.0"

__all__ = [
    "FigureConfig", "InferenceConfig", "LayerSpec", "Patch", "SamplingConfig", "TrainConfig",
    "average_precision", "collect_pairs", "combine_outputs", "denormalize_joint", "detection_ap",
    "estimate_pose", "forward", "generate_figure", "init_params", "load_checkpoint", "normalize_joint",
    "pcp", "pdj_curve", "save_checkpoint", "train", "visibility",
]
