"""prefseg: a human-in-the-loop segmentation engine driven by binary
better/worse feedback.

A clicking policy learns from ±1 verdicts where to place labeled clicks,
clicks densify into pseudo-masks through feature-similarity propagation, and
a segmentation learner is fine-tuned round over round on filtered
pseudo-labels. Verdicts come from a Dice-delta oracle (simulated mode) or a
live reviewer through the HTTP feedback service.
"""

from .core import (
    BACKGROUND,
    FOREGROUND,
    DatasetManifest,
    FeatureMap,
    ImageRecord,
    Mask,
    ValidationError,
    load_feature_map,
    load_manifest,
    pixel_to_patch,
)
from .metrics import MetricReport, dice, hd95, iou
from .orchestrator import RunConfig, filter_top_k, run, run_episode
from .propagation import LabeledClick, PropagationConfig, propagate, similarity_map
from .world import SyntheticWorldConfig, generate_world

__version__ = "0.1.0"

__all__ = [
    "BACKGROUND",
    "FOREGROUND",
    "DatasetManifest",
    "FeatureMap",
    "ImageRecord",
    "Mask",
    "MetricReport",
    "LabeledClick",
    "PropagationConfig",
    "RunConfig",
    "SyntheticWorldConfig",
    "ValidationError",
    "dice",
    "filter_top_k",
    "generate_world",
    "hd95",
    "iou",
    "load_feature_map",
    "load_manifest",
    "pixel_to_patch",
    "propagate",
    "run",
    "run_episode",
    "similarity_map",
    "__version__",
]
