"""Training and inference runs that speak the pipeline's file formats.

``run_training`` turns an exported split layout into trained weights
plus an epoch log CSV; ``run_inference`` turns weights plus a val list
into a predictions JSONL. Both ends are plain files so the toolkit that
produced the layout can consume the results without importing anything
from this package.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import torch
import transformers
from transformers import YolosConfig, YolosForObjectDetection, YolosImageProcessor

from . import backend
from .errors import LayoutError, TrainerError
from .layout import SplitLayout, load_layout

EPOCH_LOG_HEADER = "epoch,box_loss,cls_loss,obj_loss,precision,recall,f1,map50,map50_95"
WEIGHTS_NAME = "weights.pt"
EPOCH_LOG_NAME = "epoch_log.csv"
METADATA_NAME = "run_metadata.json"
TRAINER_LOG_NAME = "trainer.log"

# Backend defaults used when no override is given; recorded in the run
# metadata so a run is reproducible even though these are not tuned.
DEFAULT_LR = 1e-4
DEFAULT_WEIGHT_DECAY = 1e-4
_ALLOWED_OVERRIDES = ("lr", "weight_decay")


@dataclass(frozen=True)
class TrainRunConfig:
    """Everything one training run needs.

    ``overrides`` passes optimizer hyper-parameters straight through to
    the backend (keys: lr, weight_decay); anything not overridden uses
    the backend default and both end up in the run metadata.
    """

    layout_dir: Path
    out_dir: Path
    checkpoint: str = backend.SCRATCH_TINY
    epochs: int = 60
    image_size: int = 640
    batch_size: int = 8
    seed: int = 0
    overrides: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be at least 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.image_size < backend.PATCH_SIZE or self.image_size % backend.PATCH_SIZE:
            raise ValueError(
                f"image_size must be a positive multiple of {backend.PATCH_SIZE}, "
                f"got {self.image_size}"
            )
        for key, value in self.overrides.items():
            if key not in _ALLOWED_OVERRIDES:
                raise ValueError(
                    f"unknown override {key!r} (allowed: {', '.join(_ALLOWED_OVERRIDES)})"
                )
            if not isinstance(value, (int, float)) or not value > 0:
                raise ValueError(f"override {key!r} must be a positive number")


@dataclass(frozen=True)
class TrainOutcome:
    weights: Path
    epoch_log: Path
    metadata: Path
    trainer_log: Path


@dataclass(frozen=True)
class InferenceOutcome:
    predictions: Path
    errors: Path | None
    detections: int
    images: int
    failed: int


class _RunLog:
    """Trainer log: a file on disk plus an in-memory tail for errors."""

    def __init__(self, path: Path):
        self.path = path
        self.lines: list[str] = []
        path.write_text("", encoding="utf-8")

    def write(self, message: str) -> None:
        self.lines.append(message)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(message + "\n")

    def tail(self, n: int = 20) -> list[str]:
        return self.lines[-n:]


def _epoch_row(epoch, box, cls, obj, precision, recall, f1) -> str:
    return (
        f"{epoch},{box:.6f},{cls:.6f},{obj:.6f},"
        f"{precision:.6f},{recall:.6f},{f1:.6f},,"
    )


def run_training(config: TrainRunConfig) -> TrainOutcome:
    """Train on a layout and write weights, epoch log, and metadata.

    The layout is validated in full before the backend is touched, so a
    malformed layout never starts a run. Backend failures raise
    :class:`TrainerError` carrying the trainer log tail.
    """
    layout = load_layout(config.layout_dir)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = _RunLog(out_dir / TRAINER_LOG_NAME)

    torch.manual_seed(config.seed)
    model = backend.build_model(config.checkpoint, config.image_size, len(layout.names))
    lr = float(config.overrides.get("lr", DEFAULT_LR))
    weight_decay = float(config.overrides.get("weight_decay", DEFAULT_WEIGHT_DECAY))

    try:
        rows = _fit(model, layout, config, lr, weight_decay, log)
    except TrainerError:
        raise
    except Exception as exc:
        log.write(f"fatal: {exc}")
        raise TrainerError(f"trainer backend failed: {exc}", log.tail()) from exc

    epoch_log = out_dir / EPOCH_LOG_NAME
    epoch_log.write_text("\n".join([EPOCH_LOG_HEADER, *rows]) + "\n", encoding="utf-8")

    weights = out_dir / WEIGHTS_NAME
    torch.save(
        {
            "format": 1,
            "backend": "transformers.YolosForObjectDetection",
            "yolos_config": model.config.to_dict(),
            "names": list(layout.names),
            "image_size": config.image_size,
            "state_dict": model.state_dict(),
        },
        weights,
    )

    metadata = out_dir / METADATA_NAME
    metadata.write_text(
        json.dumps(
            {
                "backend": "transformers.YolosForObjectDetection",
                "transformers_version": transformers.__version__,
                "torch_version": torch.__version__,
                "checkpoint": config.checkpoint,
                "class_names": list(layout.names),
                "epochs": config.epochs,
                "image_size": config.image_size,
                "batch_size": config.batch_size,
                "seed": config.seed,
                "optimizer": {
                    "name": "AdamW",
                    "lr": lr,
                    "weight_decay": weight_decay,
                    "overridden": sorted(config.overrides),
                },
            },
            indent=2,
        )
        + "\n",
        encoding="utf-8",
    )
    log.write(f"done: {len(rows)} epochs, weights at {weights}")
    return TrainOutcome(weights, epoch_log, metadata, log.path)


def _fit(model, layout: SplitLayout, config: TrainRunConfig, lr, weight_decay, log) -> list[str]:
    log.write(
        f"loading {len(layout.train)} train / {len(layout.val)} val images "
        f"at {config.image_size}px"
    )
    train = [
        (backend.image_tensor(e.path, config.image_size), backend.to_target(e.boxes))
        for e in layout.train
    ]
    val = [
        (e.image_id, backend.image_tensor(e.path, config.image_size), list(e.boxes))
        for e in layout.val
    ]
    truths = {
        image_id: [(b[0], b[1:]) for b in boxes] for image_id, _, boxes in val
    }

    optimizer = torch.optim.AdamW(model.parameters(), lr=lr, weight_decay=weight_decay)
    processor = YolosImageProcessor()
    shuffler = random.Random(config.seed)
    rows = []
    for epoch in range(config.epochs):
        order = list(range(len(train)))
        shuffler.shuffle(order)
        model.train()
        sums = {"loss_bbox": 0.0, "loss_ce": 0.0, "loss_giou": 0.0}
        for start in range(0, len(order), config.batch_size):
            batch = [train[i] for i in order[start : start + config.batch_size]]
            pixel_values = torch.stack([t for t, _ in batch])
            labels = [target for _, target in batch]
            optimizer.zero_grad()
            outputs = model(pixel_values=pixel_values, labels=labels)
            outputs.loss.backward()
            optimizer.step()
            for key in sums:
                sums[key] += outputs.loss_dict[key].detach().item() * len(batch)

        n = len(train)
        model.eval()
        found = {
            image_id: backend.detect(model, processor, tensor, conf_floor=0.25)
            for image_id, tensor, _ in val
        }
        precision, recall, f1 = backend.quick_pr(found, truths)
        rows.append(
            _epoch_row(
                epoch,
                sums["loss_bbox"] / n,
                sums["loss_ce"] / n,
                sums["loss_giou"] / n,
                precision,
                recall,
                f1,
            )
        )
        log.write(
            f"epoch {epoch}: box {sums['loss_bbox'] / n:.4f} "
            f"cls {sums['loss_ce'] / n:.4f} obj {sums['loss_giou'] / n:.4f} "
            f"p {precision:.3f} r {recall:.3f} f1 {f1:.3f}"
        )
    return rows


def run_inference(
    weights: str | Path,
    val_list: str | Path,
    out: str | Path,
    conf_floor: float = 0.25,
) -> InferenceOutcome:
    """Write a predictions JSONL for every image named in ``val_list``.

    Image paths in the list are taken relative to the list file itself.
    An unreadable image goes to an errors sidecar next to ``out`` and
    the run continues; an image with no detection above the floor
    contributes zero lines. An empty list yields an empty file.
    """
    val_list = Path(val_list)
    if not val_list.is_file():
        raise LayoutError(f"val list missing: {val_list}")
    entries = [line.strip() for line in val_list.read_text(encoding="utf-8").splitlines()]
    entries = [line for line in entries if line]

    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if not entries:
        out.write_text("", encoding="utf-8")
        return InferenceOutcome(out, None, 0, 0, 0)

    bundle = torch.load(Path(weights), map_location="cpu")
    model = YolosForObjectDetection(YolosConfig.from_dict(bundle["yolos_config"]))
    model.load_state_dict(bundle["state_dict"])
    model.eval()
    processor = YolosImageProcessor()
    image_size = int(bundle["image_size"])

    lines = []
    failures = []
    written_images = 0
    for entry in entries:
        image_id = Path(entry).stem
        try:
            tensor = backend.image_tensor(val_list.parent / entry, image_size)
        except (OSError, ValueError) as exc:
            failures.append({"image_id": image_id, "path": entry, "error": str(exc)})
            continue
        written_images += 1
        for cls, score, box in backend.detect(model, processor, tensor, conf_floor):
            lines.append(
                json.dumps(
                    {"image_id": image_id, "class": cls, "conf": score, "box": list(box)}
                )
            )

    out.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    errors_path = None
    if failures:
        errors_path = out.with_suffix(".errors.jsonl")
        errors_path.write_text(
            "".join(json.dumps(f) + "\n" for f in failures), encoding="utf-8"
        )
    return InferenceOutcome(out, errors_path, len(lines), written_images, len(failures))
