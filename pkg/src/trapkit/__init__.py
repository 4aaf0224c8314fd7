"""Camera-trap detection pipeline toolkit.

Ingests annotated wildlife images from a TRAPPER-style API, prepares
stratified cross-validation splits in the detector label format, and
evaluates detection outputs (precision, recall, F1, mAP@.5, mAP@.5:.95,
confusion matrix) with training-curve diagnostics.
"""

from .dataset import (
    Annotation,
    ClassCatalog,
    DatasetStats,
    ImageRecord,
    Manifest,
    build_catalog,
    catalog_from_manifest,
    dataset_stats,
    load_manifest,
    relabel_other,
    save_manifest,
)
from .diagnostics import (
    EpochLog,
    bbox_regression_loss,
    classification_loss,
    detect_plateau,
    objectness_loss,
    parse_training_log,
    total_loss,
)
from .errors import AuthError, InputError, RemoteError
from .evaluator import (
    ClassMetrics,
    ConfusionMatrix,
    Detection,
    EvaluationResult,
    GroundTruthBox,
    MatchResult,
    OperatingPoint,
    average_precision,
    best_operating_point,
    class_sweeps,
    confusion_matrix,
    evaluate_detections,
    f1_score,
    map_at,
    match_detections,
    mean_cv,
    pool_cv,
    pr_curve,
    read_predictions_jsonl,
    write_predictions_jsonl,
)
from .geometry import (
    ImageSize,
    NormalizedBox,
    PixelBox,
    format_label_line,
    iou,
    normalized_iou,
    parse_label_line,
    to_normalized,
    to_pixel,
)
from .splitter import (
    SplitPlan,
    StratificationReport,
    export_split,
    stratified_kfold,
    verify_stratification,
)
from .trapper import FetchSummary, TrapperClient, fetch_package

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "AuthError",
    "ClassCatalog",
    "ClassMetrics",
    "ConfusionMatrix",
    "DatasetStats",
    "Detection",
    "EpochLog",
    "EvaluationResult",
    "FetchSummary",
    "GroundTruthBox",
    "ImageRecord",
    "ImageSize",
    "InputError",
    "Manifest",
    "MatchResult",
    "NormalizedBox",
    "OperatingPoint",
    "PixelBox",
    "RemoteError",
    "SplitPlan",
    "StratificationReport",
    "TrapperClient",
    "average_precision",
    "best_operating_point",
    "bbox_regression_loss",
    "build_catalog",
    "catalog_from_manifest",
    "class_sweeps",
    "classification_loss",
    "confusion_matrix",
    "dataset_stats",
    "detect_plateau",
    "evaluate_detections",
    "export_split",
    "f1_score",
    "fetch_package",
    "format_label_line",
    "iou",
    "load_manifest",
    "map_at",
    "match_detections",
    "normalized_iou",
    "objectness_loss",
    "parse_label_line",
    "parse_training_log",
    "mean_cv",
    "pool_cv",
    "pr_curve",
    "read_predictions_jsonl",
    "relabel_other",
    "save_manifest",
    "stratified_kfold",
    "to_normalized",
    "to_pixel",
    "total_loss",
    "verify_stratification",
    "write_predictions_jsonl",
]
