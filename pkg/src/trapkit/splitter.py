"""Stratified k-fold assignment and per-fold training layout export.

The split is computed by greedy iterative stratification: classes are
visited from rarest to most common (by the number of images containing
them), and each image is placed into the fold currently most deficient
in that class. Fold capacities are constrained so the folds always end
within one image of each other. All randomness comes from one seeded
Mersenne Twister (``random.Random``), so a plan depends only on the
dataset content, ``k``, and ``seed``, never on input ordering, the
platform, or hash randomization.

An exported layout is self-contained::

    out_dir/
      data.yaml        # nc, names, train, val
      train.txt        # one relative image path per line
      val.txt
      images/<image_id><ext>   # symlinks into the data directory
      labels/<image_id>.txt    # detector label format, one line per box

``images/`` and ``labels/`` share file stems so detector toolchains can
pair them by name substitution.
"""

from __future__ import annotations

import json
import os
import random
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .dataset import ClassCatalog, ImageRecord
from .errors import InputError
from .geometry import format_label_line, to_normalized


@dataclass(frozen=True)
class SplitPlan:
    """Deterministic image -> fold assignment."""

    k: int
    seed: int
    assignment: Mapping[str, int]

    def fold_ids(self, fold: int) -> list[str]:
        if not 0 <= fold < self.k:
            raise InputError(f"fold index {fold} out of range for k={self.k}")
        return sorted(i for i, f in self.assignment.items() if f == fold)

    def fold_sizes(self) -> list[int]:
        sizes = [0] * self.k
        for fold in self.assignment.values():
            sizes[fold] += 1
        return sizes


@dataclass(frozen=True)
class StratificationReport:
    """Per-fold class proportions and how far they stray from the global mix."""

    # proportions[fold][class_name] = images with the class / images in fold
    proportions: tuple[dict[str, float], ...]
    global_proportions: dict[str, float]
    max_deviation: float
    # classes whose per-fold image count differs from n_c/k by more than 1
    flagged: tuple[str, ...]


def _image_classes(rec: ImageRecord, catalog: ClassCatalog) -> set[str]:
    classes = rec.species_present()
    for name in classes:
        catalog.index_of(name)  # raises InputError on unknown class
    return classes


def stratified_kfold(
    records: Sequence[ImageRecord],
    catalog: ClassCatalog,
    k: int,
    seed: int,
) -> SplitPlan:
    """Assign every image to one of ``k`` folds, stratified by class.

    Raises:
        InputError: if ``k < 2`` or the dataset has fewer than ``k`` images.
    """
    if k < 2:
        raise InputError(f"k must be at least 2, got {k}")
    if len(records) < k:
        raise InputError(f"cannot split {len(records)} images into {k} folds")

    by_id = {}
    for rec in records:
        if rec.image_id in by_id:
            raise InputError(f"duplicate image_id {rec.image_id!r}")
        by_id[rec.image_id] = _image_classes(rec, catalog)

    image_counts: Counter[str] = Counter()
    for classes in by_id.values():
        image_counts.update(classes)

    # Rarest contained class of each image; ties by catalog index.
    def rarest(classes: set[str]) -> str:
        return min(classes, key=lambda c: (image_counts[c], catalog.index_of(c)))

    groups: dict[str, list[str]] = defaultdict(list)
    for image_id in sorted(by_id):  # canonical order, independent of input order
        groups[rarest(by_id[image_id])].append(image_id)

    rng = random.Random(seed)
    n = len(by_id)
    floor_size, extra = divmod(n, k)
    ceil_size = floor_size + (1 if extra else 0)
    fold_sizes = [0] * k
    fold_class_counts: list[Counter[str]] = [Counter() for _ in range(k)]
    assignment: dict[str, int] = {}
    remaining = n

    def eligible(fold: int) -> bool:
        if fold_sizes[fold] >= ceil_size:
            return False
        # Placing here must leave enough images to top every fold up to floor_size.
        need = sum(max(0, floor_size - s) for s in fold_sizes)
        need -= max(0, floor_size - fold_sizes[fold])
        need += max(0, floor_size - (fold_sizes[fold] + 1))
        return remaining - 1 >= need

    for cls in sorted(groups, key=lambda c: (image_counts[c], catalog.index_of(c))):
        batch = groups[cls]
        rng.shuffle(batch)
        for image_id in batch:
            fold = min(
                (f for f in range(k) if eligible(f)),
                key=lambda f: (fold_class_counts[f][cls], fold_sizes[f], f),
            )
            assignment[image_id] = fold
            fold_sizes[fold] += 1
            fold_class_counts[fold].update(by_id[image_id])
            remaining -= 1

    return SplitPlan(k=k, seed=seed, assignment=assignment)


def verify_stratification(
    plan: SplitPlan,
    records: Sequence[ImageRecord],
    catalog: ClassCatalog,
) -> StratificationReport:
    """Recount the plan and report per-fold class proportions."""
    by_id = {rec.image_id: rec for rec in records}
    for image_id in plan.assignment:
        if image_id not in by_id:
            raise InputError(f"plan references unknown image {image_id!r}")

    n = len(plan.assignment)
    global_counts: Counter[str] = Counter()
    fold_counts: list[Counter[str]] = [Counter() for _ in range(plan.k)]
    fold_sizes = [0] * plan.k
    for image_id, fold in plan.assignment.items():
        classes = _image_classes(by_id[image_id], catalog)
        global_counts.update(classes)
        fold_counts[fold].update(classes)
        fold_sizes[fold] += 1

    global_proportions = {c: global_counts[c] / n for c in catalog.names}
    proportions = tuple(
        {c: (fold_counts[f][c] / fold_sizes[f] if fold_sizes[f] else 0.0)
         for c in catalog.names}
        for f in range(plan.k)
    )
    max_deviation = max(
        (abs(proportions[f][c] - global_proportions[c])
         for f in range(plan.k) for c in catalog.names),
        default=0.0,
    )
    flagged = tuple(
        c for c in catalog.names
        if any(abs(fold_counts[f][c] - global_counts[c] / plan.k) > 1 for f in range(plan.k))
    )
    return StratificationReport(
        proportions=proportions,
        global_proportions=global_proportions,
        max_deviation=max_deviation,
        flagged=flagged,
    )


def _descriptor_text(catalog: ClassCatalog) -> str:
    names = json.dumps(list(catalog.names))  # JSON list doubles as YAML flow sequence
    return f"train: train.txt\nval: val.txt\nnc: {len(catalog)}\nnames: {names}\n"


def export_split(
    plan: SplitPlan,
    fold: int,
    records: Sequence[ImageRecord],
    catalog: ClassCatalog,
    out_dir: str | Path,
    *,
    media_root: str | Path = ".",
) -> None:
    """Write one fold's training layout under ``out_dir``.

    ``fold`` becomes the validation split; all other folds form the
    training split. Record paths are resolved against ``media_root`` and
    symlinked into the layout. Output bytes depend only on the inputs.

    Raises:
        InputError: fold out of range, or plan/record mismatch.
        FileNotFoundError: if any source image file is missing; the error
            lists every missing file and nothing is partially exported.
    """
    if not 0 <= fold < plan.k:
        raise InputError(f"fold index {fold} out of range for k={plan.k}")
    by_id = {rec.image_id: rec for rec in records}
    missing_ids = sorted(set(plan.assignment) - set(by_id))
    if missing_ids:
        raise InputError(f"plan references images missing from records: {missing_ids[:5]}")

    media_root = Path(media_root)
    sources: dict[str, Path] = {}
    missing_files = []
    for image_id in sorted(plan.assignment):
        src = media_root / by_id[image_id].path
        if not src.is_file():
            missing_files.append(str(src))
        sources[image_id] = src
    if missing_files:
        raise FileNotFoundError(
            f"{len(missing_files)} image file(s) missing, aborting export: "
            + ", ".join(missing_files[:10])
        )

    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "labels").mkdir(parents=True, exist_ok=True)

    val_lines, train_lines = [], []
    for image_id in sorted(plan.assignment):
        rec = by_id[image_id]
        src = sources[image_id]
        rel = f"images/{image_id}{src.suffix}"
        link = out_dir / rel
        if link.is_symlink() or link.exists():
            link.unlink()
        link.symlink_to(src.resolve())

        lines = [
            format_label_line(catalog.index_of(a.species), to_normalized(a.box, rec.size))
            for a in rec.annotations
        ]
        (out_dir / "labels" / f"{image_id}.txt").write_text(
            "\n".join(lines) + "\n", encoding="utf-8"
        )
        (val_lines if plan.assignment[image_id] == fold else train_lines).append(rel)

    (out_dir / "train.txt").write_text("\n".join(train_lines) + "\n", encoding="utf-8")
    (out_dir / "val.txt").write_text("\n".join(val_lines) + "\n", encoding="utf-8")
    (out_dir / "data.yaml").write_text(_descriptor_text(catalog), encoding="utf-8")
