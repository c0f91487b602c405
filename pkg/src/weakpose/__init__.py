"""weakpose: 2D keypoint localization trained from image-level presence
labels, built on a small numpy tensor engine with reverse-mode autodiff.

The pipeline: a convolutional pyramid feeds a presence classifier whose
activation maps seed a spatial position encoding; per-scale self-attention
builds a context memory; keypoint vectors refined over the skeleton graph
become decoder queries; cross-attention responses give each keypoint a
location, a part feature and a presence score.
"""

from .autodiff import Tensor, ShapeError, backward, no_grad
from .backbone import FeaturePyramidBackbone, PyramidFeatures
from .cam import CamHead, coarse_locations
from .config import ConfigError, RunConfig, load_config
from .data import (
    COCO_SKELETON,
    STICK_FIGURE_SKELETON,
    DatasetConfig,
    PoseDataset,
    Sample,
    SkeletonSpec,
    augment,
    parse_annotations,
    synth,
)
from .decoder import PoseDecoder, ResponseSet, extract_locations, part_diversity_loss
from .encoder import ContextEncoder, ContextMemory
from .evaluate import EvalReport, evaluate_model, export_heatmap, pck
from .gradcheck import GradcheckReport, gradcheck, run_suite
from .graph import SkeletonGraph, SemGCNLayer, build_graph, prototype_affinity
from .losses import LossWeights, bce_loss, mse_heatmap_loss, semi_weak_loss, weak_loss
from .model import ModelConfig, ModelOutputs, WeakPoseNet
from .optim import Adam, build_optimizer
from .train import Trainer, load_checkpoint, save_checkpoint, train

__version__ = "0.1.0"
