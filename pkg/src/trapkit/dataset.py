"""Dataset model: annotated images, class catalog, statistics, manifest I/O.

The on-disk manifest is a single JSON document::

    {
      "schema_version": 1,
      "classes": ["Red Deer", ...],
      "images": [
        {
          "image_id": "...", "path": "media/ab/abc...png",
          "width": 4000, "height": 3000, "location_id": "site-1" | null,
          "annotations": [
            {"class": "Red Deer",
             "box": {"x_min": ..., "y_min": ..., "x_max": ..., "y_max": ...},
             "coords": "pixel"}
          ]
        }, ...
      ]
    }

Annotation boxes may be declared ``"coords": "normalized"`` by upstream
sources; they are converted to pixels on load. The writer always emits
pixel coordinates.
"""

from __future__ import annotations

import json
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InputError
from .geometry import ImageSize, NormalizedBox, PixelBox, to_pixel

MANIFEST_SCHEMA_VERSION = 1

# Reserved class name aggregating species too heterogeneous to model
# individually (birds, small rodents, ...).
OTHER_CLASS = "Other"

DEFAULT_MIN_IMAGE_COUNT = 40


@dataclass(frozen=True)
class Annotation:
    """One ground-truth box for one individual animal."""

    species: str
    box: PixelBox

    def __post_init__(self) -> None:
        if not self.species:
            raise InputError("annotation species name must be non-empty")


@dataclass(frozen=True)
class ImageRecord:
    """One camera-trap image with its annotations.

    Images without annotations are not representable: empty images are
    excluded from the dataset at ingestion time.
    """

    image_id: str
    path: str
    size: ImageSize
    annotations: tuple[Annotation, ...]
    location_id: str | None = None

    def __post_init__(self) -> None:
        if not self.image_id:
            raise InputError("image_id must be non-empty")
        if os.sep in self.image_id or "/" in self.image_id or self.image_id in (".", ".."):
            raise InputError(f"image_id is not filesystem-safe: {self.image_id!r}")
        if not self.annotations:
            raise InputError(f"image {self.image_id!r} has no annotations")
        for ann in self.annotations:
            if not ann.box.fits(self.size):
                raise InputError(
                    f"annotation box {ann.box} exceeds image {self.image_id!r} "
                    f"bounds {self.size.width}x{self.size.height}"
                )

    def species_present(self) -> set[str]:
        return {ann.species for ann in self.annotations}


@dataclass(frozen=True)
class ClassCatalog:
    """Ordered class names with contiguous indices and annotation counts."""

    names: tuple[str, ...]
    annotation_counts: tuple[int, ...]
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.names) != len(set(self.names)):
            raise InputError("catalog class names must be unique")
        if len(self.annotation_counts) != len(self.names):
            raise InputError("catalog counts must parallel the class names")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.names)})

    def __len__(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise InputError(f"unknown class name {name!r}") from None

    def count_of(self, name: str) -> int:
        return self.annotation_counts[self.index_of(name)]


@dataclass(frozen=True)
class DatasetStats:
    """Exact dataset counts used for the distribution reports."""

    class_counts: dict[str, int]
    size_histogram: dict[int, int]  # floor(megapixels) -> image count
    total_images: int
    total_annotations: int


@dataclass
class Manifest:
    """A class list plus the image records it describes."""

    classes: list[str]
    records: list[ImageRecord]


def relabel_other(records: Iterable[ImageRecord], other_names: Iterable[str]) -> list[ImageRecord]:
    """Rename every species in ``other_names`` to the reserved aggregate class."""
    other = set(other_names)
    if not other:
        return list(records)
    out = []
    for rec in records:
        if rec.species_present() & other:
            anns = tuple(
                Annotation(OTHER_CLASS, a.box) if a.species in other else a
                for a in rec.annotations
            )
            rec = ImageRecord(rec.image_id, rec.path, rec.size, anns, rec.location_id)
        out.append(rec)
    return out


def build_catalog(
    records: Sequence[ImageRecord],
    min_count: int = DEFAULT_MIN_IMAGE_COUNT,
    other_names: Iterable[str] = (),
) -> tuple[ClassCatalog, list[ImageRecord]]:
    """Build the class catalog and drop rarely observed species.

    Species named in ``other_names`` are first relabeled to ``"Other"``.
    A species (after relabeling) kept only when it appears in at least
    ``min_count`` distinct images; strictly-fewer occurrences are
    excluded. Annotations of dropped species are removed and images left
    with no annotations are dropped entirely.

    Catalog indices are assigned by descending annotation count, ties
    broken by name.
    """
    relabeled = relabel_other(records, other_names)

    image_counts: Counter[str] = Counter()
    for rec in relabeled:
        image_counts.update(rec.species_present())
    kept_species = {s for s, n in image_counts.items() if n >= min_count}

    kept_records: list[ImageRecord] = []
    annotation_counts: Counter[str] = Counter()
    for rec in relabeled:
        anns = tuple(a for a in rec.annotations if a.species in kept_species)
        if not anns:
            continue
        annotation_counts.update(a.species for a in anns)
        if len(anns) != len(rec.annotations):
            rec = ImageRecord(rec.image_id, rec.path, rec.size, anns, rec.location_id)
        kept_records.append(rec)

    ordered = sorted(kept_species, key=lambda s: (-annotation_counts[s], s))
    catalog = ClassCatalog(
        names=tuple(ordered),
        annotation_counts=tuple(annotation_counts[s] for s in ordered),
    )
    return catalog, kept_records


def catalog_from_manifest(manifest: Manifest) -> ClassCatalog:
    """Rebuild the catalog of an already filtered manifest.

    Class order is taken from the manifest verbatim (it defines the label
    indices of any exported layout); annotation counts are recounted from
    the records.

    Raises:
        InputError: if a record is annotated with a species missing from
            the manifest's class list.
    """
    counts: Counter[str] = Counter()
    for rec in manifest.records:
        counts.update(a.species for a in rec.annotations)
    unknown = sorted(set(counts) - set(manifest.classes))
    if unknown:
        raise InputError(
            f"manifest records use classes missing from the class list: {unknown[:5]}"
        )
    return ClassCatalog(
        names=tuple(manifest.classes),
        annotation_counts=tuple(counts[name] for name in manifest.classes),
    )


def dataset_stats(records: Sequence[ImageRecord], catalog: ClassCatalog) -> DatasetStats:
    """Per-class annotation counts and the image-size histogram.

    Histogram buckets are megapixel-floored: an image of W*H pixels lands
    in bucket ``floor(W*H / 1e6)``.
    """
    class_counts = {name: 0 for name in catalog.names}
    size_histogram: Counter[int] = Counter()
    total_annotations = 0
    for rec in records:
        for ann in rec.annotations:
            if ann.species not in class_counts:
                raise InputError(
                    f"image {rec.image_id!r} has class {ann.species!r} "
                    "that is not in the catalog"
                )
            class_counts[ann.species] += 1
            total_annotations += 1
        size_histogram[int(rec.size.megapixels)] += 1
    return DatasetStats(
        class_counts=class_counts,
        size_histogram=dict(sorted(size_histogram.items())),
        total_images=len(records),
        total_annotations=total_annotations,
    )


def _require(obj: dict, key: str, context: str):
    if key not in obj:
        raise InputError(f"{context}: missing required field {key!r}")
    return obj[key]


def _record_from_json(entry: dict) -> ImageRecord:
    context = f"manifest image {entry.get('image_id', '<missing id>')!r}"
    image_id = _require(entry, "image_id", context)
    path = _require(entry, "path", context)
    size = ImageSize(int(_require(entry, "width", context)),
                     int(_require(entry, "height", context)))
    annotations = []
    for ann in _require(entry, "annotations", context):
        species = _require(ann, "class", context)
        box_obj = _require(ann, "box", context)
        coords = ann.get("coords", "pixel")
        if coords == "pixel":
            box = PixelBox(float(box_obj["x_min"]), float(box_obj["y_min"]),
                           float(box_obj["x_max"]), float(box_obj["y_max"]))
        elif coords == "normalized":
            x0, y0, x1, y1 = (float(box_obj["x_min"]), float(box_obj["y_min"]),
                              float(box_obj["x_max"]), float(box_obj["y_max"]))
            nbox = NormalizedBox(cx=(x0 + x1) / 2, cy=(y0 + y1) / 2, w=x1 - x0, h=y1 - y0)
            box = to_pixel(nbox, size)
        else:
            raise InputError(f"{context}: unknown coords mode {coords!r}")
        annotations.append(Annotation(species, box))
    return ImageRecord(
        image_id=image_id,
        path=path,
        size=size,
        annotations=tuple(annotations),
        location_id=entry.get("location_id"),
    )


def load_manifest(path: str | Path) -> Manifest:
    """Parse and validate a manifest file."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"manifest {path} is not valid JSON: {exc}") from exc
    version = doc.get("schema_version")
    if version != MANIFEST_SCHEMA_VERSION:
        raise InputError(f"manifest {path}: unsupported schema_version {version!r}")
    records = [_record_from_json(entry) for entry in doc.get("images", [])]
    seen = set()
    for rec in records:
        if rec.image_id in seen:
            raise InputError(f"manifest {path}: duplicate image_id {rec.image_id!r}")
        seen.add(rec.image_id)
    return Manifest(classes=list(doc.get("classes", [])), records=records)


def manifest_to_json(manifest: Manifest) -> str:
    images = []
    for rec in sorted(manifest.records, key=lambda r: r.image_id):
        images.append({
            "image_id": rec.image_id,
            "path": rec.path,
            "width": rec.size.width,
            "height": rec.size.height,
            "location_id": rec.location_id,
            "annotations": [
                {
                    "class": a.species,
                    "box": {"x_min": a.box.x_min, "y_min": a.box.y_min,
                            "x_max": a.box.x_max, "y_max": a.box.y_max},
                    "coords": "pixel",
                }
                for a in rec.annotations
            ],
        })
    doc = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "classes": list(manifest.classes),
        "images": images,
    }
    return json.dumps(doc, indent=2) + "\n"


def save_manifest(path: str | Path, manifest: Manifest) -> None:
    """Write the manifest atomically (temp file + rename)."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(manifest_to_json(manifest), encoding="utf-8")
    os.replace(tmp, path)
