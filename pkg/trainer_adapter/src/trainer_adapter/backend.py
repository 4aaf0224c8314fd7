"""The pinned trainer backend: YOLOS from HuggingFace ``transformers``.

``scratch-tiny`` builds a small randomly initialized model, which keeps
smoke runs fast and needs no checkpoint download; any other identifier
must be a local directory previously written by ``save_pretrained``.
The exact library versions in use are recorded in the run metadata next
to the weights.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image
from transformers import YolosConfig, YolosForObjectDetection, YolosImageProcessor

PATCH_SIZE = 16
SCRATCH_TINY = "scratch-tiny"

# ImageNet statistics, the convention YOLOS checkpoints are trained with.
_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


def build_model(checkpoint: str, image_size: int, num_labels: int) -> YolosForObjectDetection:
    if checkpoint == SCRATCH_TINY:
        config = YolosConfig(
            hidden_size=32,
            num_hidden_layers=2,
            num_attention_heads=2,
            intermediate_size=64,
            image_size=[image_size, image_size],
            patch_size=PATCH_SIZE,
            num_detection_tokens=10,
            num_labels=num_labels,
        )
        return YolosForObjectDetection(config)
    path = Path(checkpoint)
    if path.is_dir():
        model = YolosForObjectDetection.from_pretrained(path)
        if model.config.num_labels != num_labels:
            raise ValueError(
                f"checkpoint {checkpoint!r} has {model.config.num_labels} labels, "
                f"layout has {num_labels}"
            )
        return model
    raise ValueError(
        f"unknown checkpoint identifier {checkpoint!r} "
        f"(expected {SCRATCH_TINY!r} or a local model directory)"
    )


def image_tensor(path: str | Path, image_size: int) -> torch.Tensor:
    """Load, resize and normalize one image to a (3, S, S) float tensor."""
    with Image.open(path) as img:
        rgb = img.convert("RGB").resize((image_size, image_size), Image.BILINEAR)
    arr = np.asarray(rgb, dtype=np.float32) / 255.0
    arr = (arr - _MEAN) / _STD
    return torch.from_numpy(arr.transpose(2, 0, 1).copy())


def to_target(boxes) -> dict[str, torch.Tensor]:
    """Label boxes of one image in the format the model's loss expects."""
    if boxes:
        classes = torch.tensor([b[0] for b in boxes], dtype=torch.long)
        coords = torch.tensor([b[1:] for b in boxes], dtype=torch.float32)
    else:
        classes = torch.zeros((0,), dtype=torch.long)
        coords = torch.zeros((0, 4), dtype=torch.float32)
    return {"class_labels": classes, "boxes": coords}


def detect(
    model: YolosForObjectDetection,
    processor: YolosImageProcessor,
    pixel_values: torch.Tensor,
    conf_floor: float,
) -> list[tuple[int, float, tuple[float, float, float, float]]]:
    """Run one image and return (class, score, normalized cxcywh) tuples.

    Boxes are clipped to the unit square; scores are strictly above the
    floor. Results are ordered by descending score.
    """
    with torch.no_grad():
        outputs = model(pixel_values=pixel_values.unsqueeze(0))
    # Unit target size makes the post-processor hand back normalized corners.
    result = processor.post_process_object_detection(
        outputs, threshold=conf_floor, target_sizes=[(1.0, 1.0)]
    )[0]
    detections = []
    for score, label, corners in zip(result["scores"], result["labels"], result["boxes"]):
        x0, y0, x1, y1 = (min(max(float(v), 0.0), 1.0) for v in corners)
        w, h = x1 - x0, y1 - y0
        if w <= 0.0 or h <= 0.0:
            continue
        box = (x0 + w / 2.0, y0 + h / 2.0, w, h)
        detections.append((int(label), float(score), box))
    detections.sort(key=lambda d: -d[1])
    return detections


def _iou(a, b) -> float:
    ax0, ay0, ax1, ay1 = a[0] - a[2] / 2, a[1] - a[3] / 2, a[0] + a[2] / 2, a[1] + a[3] / 2
    bx0, by0, bx1, by1 = b[0] - b[2] / 2, b[1] - b[3] / 2, b[0] + b[2] / 2, b[1] + b[3] / 2
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / ((ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter)


def quick_pr(
    detections_by_image: dict[str, list],
    truths_by_image: dict[str, list],
    conf: float = 0.25,
    iou_floor: float = 0.5,
) -> tuple[float, float, float]:
    """The trainer's own rough validation precision/recall/F1.

    Greedy same-class matching at one confidence and one IoU threshold.
    This feeds the per-epoch log only; the pipeline's evaluator is the
    authority on real metrics.
    """
    tp = fp = total_truth = 0
    for image_id, truths in truths_by_image.items():
        total_truth += len(truths)
        claimed = [False] * len(truths)
        dets = [d for d in detections_by_image.get(image_id, []) if d[1] >= conf]
        for cls, _, box in sorted(dets, key=lambda d: -d[1]):
            best, best_iou = None, iou_floor
            for gi, (gcls, gbox) in enumerate(truths):
                if claimed[gi] or gcls != cls:
                    continue
                overlap = _iou(box, gbox)
                if overlap >= best_iou:
                    best, best_iou = gi, overlap
            if best is None:
                fp += 1
            else:
                claimed[best] = True
                tp += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / total_truth if total_truth else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1
