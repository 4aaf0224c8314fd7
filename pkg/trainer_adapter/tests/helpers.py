"""Shared builders for layout fixtures."""

import json
from pathlib import Path

from PIL import Image


def write_image(path: Path, size=(64, 48), color=(30, 60, 90)) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.new("RGB", size, color).save(path)


def label_line(cls, cx, cy, w, h) -> str:
    return f"{cls} {cx:.6f} {cy:.6f} {w:.6f} {h:.6f}"


def write_layout(root, names, train, val) -> Path:
    """Build a complete layout; train/val map image_id to label tuples."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(exist_ok=True)
    for i, (image_id, boxes) in enumerate([*train.items(), *val.items()]):
        write_image(root / "images" / f"{image_id}.png",
                    color=(20 + (10 * i) % 200, 80, 120))
        (root / "labels" / f"{image_id}.txt").write_text(
            "".join(label_line(*b) + "\n" for b in boxes), encoding="utf-8"
        )
    (root / "train.txt").write_text(
        "".join(f"images/{image_id}.png\n" for image_id in train), encoding="utf-8"
    )
    (root / "val.txt").write_text(
        "".join(f"images/{image_id}.png\n" for image_id in val), encoding="utf-8"
    )
    (root / "data.yaml").write_text(
        f"train: train.txt\nval: val.txt\n"
        f"nc: {len(names)}\nnames: {json.dumps(list(names))}\n",
        encoding="utf-8",
    )
    return root


BOX_A = (0, 0.4, 0.5, 0.3, 0.4)
BOX_B = (1, 0.6, 0.5, 0.25, 0.35)


def four_image_layout(root) -> Path:
    """The smallest interesting layout: 2 train, 2 val, 2 classes."""
    return write_layout(
        root,
        ["Fox", "Wolf"],
        {"tr_0": [BOX_A], "tr_1": [BOX_B]},
        {"va_0": [BOX_A], "va_1": [BOX_B, BOX_A]},
    )
