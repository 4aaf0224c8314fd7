"""Split layout parsing.

A layout directory is the contract with the rest of the pipeline:

    data.yaml    list file names, class count, class names
    train.txt    image paths relative to the layout root, one per line
    val.txt
    images/      the images themselves
    labels/      one ``<class> <cx> <cy> <w> <h>`` file per image

Class indices everywhere in this package follow the order of ``names``
in the descriptor. Loading validates the whole layout up front, images,
label files and all, so a broken layout fails before any trainer work
starts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import LayoutError


@dataclass(frozen=True)
class LabeledImage:
    """One image plus its parsed label boxes (class, cx, cy, w, h)."""

    image_id: str
    path: Path
    boxes: tuple[tuple[int, float, float, float, float], ...]


@dataclass(frozen=True)
class SplitLayout:
    root: Path
    names: tuple[str, ...]
    train: tuple[LabeledImage, ...]
    val: tuple[LabeledImage, ...]


def _parse_label_file(path: Path, class_count: int) -> tuple[tuple[int, float, float, float, float], ...]:
    boxes = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) != 5:
            raise LayoutError(f"{path}:{lineno}: expected 5 fields, got {len(tokens)}")
        try:
            cls = int(tokens[0])
            cx, cy, w, h = (float(t) for t in tokens[1:])
        except ValueError as exc:
            raise LayoutError(f"{path}:{lineno}: {exc}") from exc
        if not 0 <= cls < class_count:
            raise LayoutError(
                f"{path}:{lineno}: class {cls} out of range for {class_count} classes"
            )
        if not all(math.isfinite(v) for v in (cx, cy, w, h)):
            raise LayoutError(f"{path}:{lineno}: non-finite coordinate")
        if not (0.0 <= cx <= 1.0 and 0.0 <= cy <= 1.0):
            raise LayoutError(f"{path}:{lineno}: center outside [0, 1]")
        if not (0.0 < w <= 1.0 and 0.0 < h <= 1.0):
            raise LayoutError(f"{path}:{lineno}: width/height outside (0, 1]")
        boxes.append((cls, cx, cy, w, h))
    return tuple(boxes)


def _load_list(root: Path, list_name: str, names: tuple[str, ...]) -> tuple[LabeledImage, ...]:
    list_path = root / list_name
    if not list_path.is_file():
        raise LayoutError(f"list file missing: {list_path}")
    entries = []
    seen = set()
    for line in list_path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        image_path = root / line
        if not image_path.is_file():
            raise LayoutError(f"{list_path} names a missing image: {line}")
        image_id = Path(line).stem
        if image_id in seen:
            raise LayoutError(f"{list_path} lists {image_id!r} twice")
        seen.add(image_id)
        label_path = root / "labels" / f"{image_id}.txt"
        if not label_path.is_file():
            raise LayoutError(f"label file missing for {image_id!r}: {label_path}")
        entries.append(LabeledImage(image_id, image_path, _parse_label_file(label_path, len(names))))
    if not entries:
        raise LayoutError(f"{list_path} lists no images")
    return tuple(entries)


def load_layout(root: str | Path) -> SplitLayout:
    """Load and fully validate a layout directory.

    Raises:
        LayoutError: anything structurally wrong, from a missing
            descriptor down to a single bad label line.
    """
    root = Path(root)
    if not root.is_dir():
        raise LayoutError(f"layout directory missing: {root}")
    descriptor = root / "data.yaml"
    if not descriptor.is_file():
        raise LayoutError(f"descriptor missing: {descriptor}")
    try:
        parsed = yaml.safe_load(descriptor.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise LayoutError(f"{descriptor}: not valid YAML: {exc}") from exc
    if not isinstance(parsed, dict):
        raise LayoutError(f"{descriptor}: expected a mapping")
    for key in ("train", "val", "nc", "names"):
        if key not in parsed:
            raise LayoutError(f"{descriptor}: missing key {key!r}")
    names = parsed["names"]
    if not isinstance(names, list) or not all(isinstance(n, str) and n for n in names):
        raise LayoutError(f"{descriptor}: names must be a list of non-empty strings")
    if len(set(names)) != len(names):
        raise LayoutError(f"{descriptor}: duplicate class names")
    if parsed["nc"] != len(names):
        raise LayoutError(
            f"{descriptor}: nc is {parsed['nc']} but names has {len(names)} entries"
        )
    names = tuple(names)
    return SplitLayout(
        root=root,
        names=names,
        train=_load_list(root, parsed["train"], names),
        val=_load_list(root, parsed["val"], names),
    )
