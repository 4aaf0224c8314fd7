"""Adapter between exported split layouts and a real detection trainer.

Consumes a layout directory (descriptor, image lists, label files) and
produces the pipeline's interchange files: an epoch log CSV from
training and a predictions JSONL from inference.
"""

from .adapter import (
    EPOCH_LOG_HEADER,
    InferenceOutcome,
    TrainOutcome,
    TrainRunConfig,
    run_inference,
    run_training,
)
from .errors import LayoutError, TrainerError
from .layout import LabeledImage, SplitLayout, load_layout

__all__ = [
    "EPOCH_LOG_HEADER",
    "InferenceOutcome",
    "LabeledImage",
    "LayoutError",
    "SplitLayout",
    "TrainOutcome",
    "TrainRunConfig",
    "TrainerError",
    "load_layout",
    "run_inference",
    "run_training",
]
