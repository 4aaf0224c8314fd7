"""Detection evaluation: matching, PR metrics, AP, confusion matrix, CV pooling.

Two matching regimes coexist on purpose. Precision/recall/AP matching is
class-aware (a detection can only claim a ground truth of its own class),
which is what the per-class metrics table needs. The confusion matrix
matches class-agnostically so cross-class mistakes land in off-diagonal
cells instead of disappearing into false positives and false negatives.

Average precision uses 101-point interpolation: the precision curve is
replaced by its right-to-left monotone envelope, sampled at recall 0.00,
0.01, ..., 1.00 (zero beyond the highest achieved recall), and averaged.

All reductions iterate images in sorted image_id order and break
confidence ties by (class_index, input order), so results do not depend
on input ordering, hashing, or platform.

External formats owned by this module:

* predictions: JSON Lines, one detection per line,
  ``{"image_id": str, "class": int, "conf": float, "box": [cx, cy, w, h]}``
  with the box in normalized coordinates;
* metrics report: CSV ``class,targets,f1,precision,recall,map50,map50_95``
  with an aggregate ``all`` row first;
* confusion matrix: CSV of raw counts plus a column-normalized variant
  rounded to 3 decimals.
"""

from __future__ import annotations

import json
from bisect import bisect_left
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .dataset import ClassCatalog, ImageRecord
from .errors import InputError
from .geometry import NormalizedBox, normalized_iou, to_normalized

DEFAULT_IOU_THRESHOLD = 0.5
DEFAULT_CONF_THRESHOLD = 0.25
#: IoU ladder behind the mAP@.5:.95 column: 0.50 to 0.95, step 0.05.
MAP_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
#: Confidence grid scanned by best_operating_point (1000 points over [0, 1]).
CONFIDENCE_GRID = tuple(i / 999 for i in range(1000))

METRICS_CSV_HEADER = "class,targets,f1,precision,recall,map50,map50_95"
AGGREGATE_ROW_NAME = "all"
BACKGROUND_NAME = "background"


@dataclass(frozen=True)
class Detection:
    """One predicted box on one image."""

    image_id: str
    class_index: int
    confidence: float
    box: NormalizedBox

    def __post_init__(self) -> None:
        if not self.image_id:
            raise InputError("detection image_id must be non-empty")
        if self.class_index < 0:
            raise InputError(f"detection class_index must be >= 0, got {self.class_index}")
        if not 0.0 <= self.confidence <= 1.0:
            raise InputError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class GroundTruthBox:
    """One annotated box, already resolved to a class index."""

    class_index: int
    box: NormalizedBox

    def __post_init__(self) -> None:
        if self.class_index < 0:
            raise InputError(f"ground truth class_index must be >= 0, got {self.class_index}")


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching one image's detections against its ground truths.

    Every detection and every ground truth appears in exactly one of the
    three fields, so counts are conserved by construction.
    """

    pairs: tuple[tuple[Detection, GroundTruthBox, float], ...]
    unmatched_detections: tuple[Detection, ...]
    unmatched_ground_truths: tuple[GroundTruthBox, ...]


@dataclass(frozen=True)
class ClassMetrics:
    """One row of the metrics table."""

    name: str
    targets: int
    precision: float
    recall: float
    f1: float
    ap50: float
    ap50_95: float


@dataclass(frozen=True)
class OperatingPoint:
    """Confidence threshold maximizing mean F1, and the metrics there."""

    threshold: float
    mean_f1: float
    # class_index -> (precision, recall, f1)
    per_class: Mapping[int, tuple[float, float, float]]


@dataclass(frozen=True)
class ClassSweep:
    """Confidence-ordered TP/FP outcomes for one class across the dataset.

    ``outcomes`` is sorted by descending confidence; truncating it at a
    confidence threshold reproduces matching restricted to detections at
    or above that threshold, because greedy confidence-ordered matching
    never lets a later detection change an earlier one's outcome.
    """

    class_index: int
    targets: int
    outcomes: tuple[tuple[float, bool], ...]


@dataclass(frozen=True)
class ConfusionMatrix:
    """(C+1) x (C+1) counts; rows are predicted, columns are true.

    Index C is the background pseudo-class: row C counts ground truths
    nothing matched, column C counts detections matching nothing. Cell
    (C, C) is structurally zero.
    """

    counts: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        size = len(self.counts)
        if size < 2 or any(len(row) != size for row in self.counts):
            raise InputError("confusion matrix must be square with at least 2 rows")
        if any(v < 0 for row in self.counts for v in row):
            raise InputError("confusion matrix counts must be non-negative")
        if self.counts[size - 1][size - 1] != 0:
            raise InputError("background/background cell must be 0")

    @property
    def background_index(self) -> int:
        return len(self.counts) - 1

    def column_sums(self) -> tuple[int, ...]:
        size = len(self.counts)
        return tuple(sum(self.counts[r][c] for r in range(size)) for c in range(size))

    def normalized(self) -> tuple[tuple[float, ...], ...]:
        """Divide each column by its sum; zero-support columns stay zero."""
        size = len(self.counts)
        sums = self.column_sums()
        return tuple(
            tuple(self.counts[r][c] / sums[c] if sums[c] else 0.0 for c in range(size))
            for r in range(size)
        )


@dataclass(frozen=True)
class EvaluationResult:
    """Full per-class metrics table with the aggregate row first."""

    operating_threshold: float
    rows: tuple[ClassMetrics, ...]

    @property
    def aggregate(self) -> ClassMetrics:
        return self.rows[0]


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if not 0.0 <= precision <= 1.0 or not 0.0 <= recall <= 1.0:
        raise InputError(f"precision/recall must be in [0, 1], got ({precision}, {recall})")
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _sorted_detections(dets: Sequence[Detection]) -> list[Detection]:
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, dets[i].class_index, i))
    return [dets[i] for i in order]


def _greedy_match(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    iou_threshold: float,
    *,
    class_aware: bool,
) -> tuple[MatchResult, list[tuple[Detection, bool]]]:
    """Match one image; also return (detection, matched) in visit order.

    Visit order is the tie-broken descending-confidence order, which is
    exactly the order the PR sweep must preserve for equal confidences.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise InputError(f"iou_threshold must be in [0, 1], got {iou_threshold}")
    claimed = [False] * len(gts)
    pairs = []
    unmatched_dets = []
    outcomes = []
    for det in _sorted_detections(dets):
        best_iou = 0.0
        best_gi = -1
        for gi, gt in enumerate(gts):
            if claimed[gi]:
                continue
            if class_aware and gt.class_index != det.class_index:
                continue
            iou = normalized_iou(det.box, gt.box)
            if iou >= iou_threshold and iou > best_iou:
                best_iou = iou
                best_gi = gi
        if best_gi >= 0:
            claimed[best_gi] = True
            pairs.append((det, gts[best_gi], best_iou))
        else:
            unmatched_dets.append(det)
        outcomes.append((det, best_gi >= 0))
    unmatched_gts = tuple(gt for gi, gt in enumerate(gts) if not claimed[gi])
    return MatchResult(tuple(pairs), tuple(unmatched_dets), unmatched_gts), outcomes


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> MatchResult:
    """Greedily match one image's detections to its ground truths.

    Detections are visited in descending confidence (ties broken by
    class index, then input order); each claims the unclaimed same-class
    ground truth with the highest IoU at or above ``iou_threshold``.

    Raises:
        InputError: if detections carry more than one image_id.
    """
    ids = {d.image_id for d in dets}
    if len(ids) > 1:
        raise InputError(f"detections span multiple images: {sorted(ids)}")
    result, _ = _greedy_match(dets, gts, iou_threshold, class_aware=True)
    return result


def _group_by_image(dets: Sequence[Detection]) -> dict[str, list[Detection]]:
    grouped: dict[str, list[Detection]] = defaultdict(list)
    for det in dets:
        grouped[det.image_id].append(det)
    return grouped


def class_sweeps(
    dets: Sequence[Detection],
    gts: Mapping[str, Sequence[GroundTruthBox]],
    class_count: int,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> dict[int, ClassSweep]:
    """Build per-class confidence sweeps over the whole dataset.

    Classes with zero targets and zero detections are omitted; everything
    else downstream treats absence as "excluded from macro means".
    """
    if class_count < 1:
        raise InputError(f"class_count must be >= 1, got {class_count}")
    for image_id, boxes in gts.items():
        for gt in boxes:
            if gt.class_index >= class_count:
                raise InputError(
                    f"ground truth class {gt.class_index} out of range on image {image_id!r}"
                )
    grouped = _group_by_image(dets)
    targets = [0] * class_count
    for boxes in gts.values():
        for gt in boxes:
            targets[gt.class_index] += 1

    outcomes: list[list[tuple[float, bool]]] = [[] for _ in range(class_count)]
    for image_id in sorted(set(grouped) | set(gts)):
        image_dets = grouped.get(image_id, [])
        for det in image_dets:
            if det.class_index >= class_count:
                raise InputError(
                    f"detection class {det.class_index} out of range on image {image_id!r}"
                )
        _, image_outcomes = _greedy_match(
            image_dets, tuple(gts.get(image_id, ())), iou_threshold, class_aware=True
        )
        for det, matched in image_outcomes:
            outcomes[det.class_index].append((det.confidence, matched))

    sweeps = {}
    for ci in range(class_count):
        if targets[ci] == 0 and not outcomes[ci]:
            continue
        ordered = sorted(outcomes[ci], key=lambda o: -o[0])  # stable: keeps image order
        sweeps[ci] = ClassSweep(class_index=ci, targets=targets[ci], outcomes=tuple(ordered))
    return sweeps


def pr_curve(sweep: ClassSweep) -> tuple[tuple[float, float], ...]:
    """Cumulative (recall, precision) points in descending-confidence order."""
    points = []
    tp = fp = 0
    for _, is_tp in sweep.outcomes:
        if is_tp:
            tp += 1
        else:
            fp += 1
        recall = tp / sweep.targets if sweep.targets else 0.0
        points.append((recall, tp / (tp + fp)))
    return tuple(points)


def average_precision(curve: Sequence[tuple[float, float]], targets: int) -> float:
    """Area under the 101-point interpolated precision-recall curve."""
    if targets < 0:
        raise InputError(f"targets must be >= 0, got {targets}")
    if targets == 0 or not curve:
        return 0.0
    recalls = [r for r, _ in curve]
    envelope = [p for _, p in curve]
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    total = 0.0
    for i in range(101):
        j = bisect_left(recalls, i / 100)
        if j < len(envelope):
            total += envelope[j]
    return total / 101


@dataclass(frozen=True)
class MapResult:
    """Per-class AP per IoU threshold, plus the macro means."""

    thresholds: tuple[float, ...]
    # class_index -> {iou_threshold -> ap}; only classes in the macro mean
    per_class: Mapping[int, Mapping[float, float]]

    def class_mean(self, class_index: int) -> float:
        by_thr = self.per_class[class_index]
        return sum(by_thr.values()) / len(by_thr)

    def mean_at(self, threshold: float) -> float:
        if threshold not in self.thresholds:
            raise InputError(f"threshold {threshold} was not evaluated")
        if not self.per_class:
            return 0.0
        return sum(aps[threshold] for aps in self.per_class.values()) / len(self.per_class)

    def mean_over_thresholds(self) -> float:
        if not self.per_class:
            return 0.0
        return sum(self.class_mean(ci) for ci in self.per_class) / len(self.per_class)


def map_at(
    dets: Sequence[Detection],
    gts: Mapping[str, Sequence[GroundTruthBox]],
    class_count: int,
    iou_thresholds: Iterable[float] = MAP_THRESHOLDS,
) -> MapResult:
    """Compute per-class AP at each IoU threshold and the macro means.

    Classes with zero targets and zero detections are excluded from the
    means; zero targets with detections present scores AP 0.
    """
    thresholds = tuple(sorted(set(iou_thresholds)))
    if not thresholds:
        raise InputError("iou_thresholds must not be empty")
    per_class: dict[int, dict[float, float]] = {}
    for thr in thresholds:
        sweeps = class_sweeps(dets, gts, class_count, thr)
        for ci, sweep in sweeps.items():
            per_class.setdefault(ci, {})[thr] = average_precision(pr_curve(sweep), sweep.targets)
    # A class can enter at one threshold only by having detections or targets,
    # both of which are threshold-independent, so every inner dict is complete.
    return MapResult(thresholds=thresholds, per_class=per_class)


def best_operating_point(sweeps: Mapping[int, ClassSweep]) -> OperatingPoint:
    """Scan the confidence grid for the threshold maximizing mean F1.

    Ties go to the lowest threshold, so a dataset with no detections at
    all lands on threshold 0 with all-zero metrics.

    Raises:
        InputError: if ``sweeps`` is empty.
    """
    if not sweeps:
        raise InputError("cannot pick an operating point from zero classes")

    # Pre-sort cumulative TP counts per class so each grid point is a bisect.
    prepared = {}
    for ci, sweep in sorted(sweeps.items()):
        confs_asc = [c for c, _ in reversed(sweep.outcomes)]
        cum_tp = [0]
        for _, is_tp in sweep.outcomes:
            cum_tp.append(cum_tp[-1] + (1 if is_tp else 0))
        prepared[ci] = (sweep, confs_asc, cum_tp)

    def metrics_at(threshold: float) -> dict[int, tuple[float, float, float]]:
        out = {}
        for ci, (sweep, confs_asc, cum_tp) in prepared.items():
            kept = len(confs_asc) - bisect_left(confs_asc, threshold)
            tp = cum_tp[kept]
            fp = kept - tp
            precision = tp / kept if kept else 0.0
            recall = tp / sweep.targets if sweep.targets else 0.0
            out[ci] = (precision, recall, f1_score(precision, recall))
        return out

    best_threshold = 0.0
    best_mean = -1.0
    for threshold in CONFIDENCE_GRID:
        per_class = metrics_at(threshold)
        mean_f1 = sum(m[2] for m in per_class.values()) / len(per_class)
        if mean_f1 > best_mean:
            best_mean = mean_f1
            best_threshold = threshold
    final = metrics_at(best_threshold)
    return OperatingPoint(threshold=best_threshold, mean_f1=best_mean, per_class=final)


def confusion_matrix(
    dets: Sequence[Detection],
    gts: Mapping[str, Sequence[GroundTruthBox]],
    class_count: int,
    conf_threshold: float = DEFAULT_CONF_THRESHOLD,
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
) -> ConfusionMatrix:
    """Class-agnostic confusion matrix at a fixed operating point.

    Detections below ``conf_threshold`` are discarded. The rest match
    ground truths of any class by greedy highest-IoU; a pair of predicted
    class i over true class j increments cell (i, j), a missed ground
    truth increments (background, j), a spurious detection (i, background).
    """
    if not 0.0 <= conf_threshold <= 1.0:
        raise InputError(f"conf_threshold must be in [0, 1], got {conf_threshold}")
    size = class_count + 1
    background = class_count
    counts = [[0] * size for _ in range(size)]
    grouped = _group_by_image(dets)
    for image_id in sorted(set(grouped) | set(gts)):
        image_dets = [d for d in grouped.get(image_id, []) if d.confidence >= conf_threshold]
        image_gts = tuple(gts.get(image_id, ()))
        for det in image_dets:
            if det.class_index >= class_count:
                raise InputError(
                    f"detection class {det.class_index} out of range on image {image_id!r}"
                )
        for gt in image_gts:
            if gt.class_index >= class_count:
                raise InputError(
                    f"ground truth class {gt.class_index} out of range on image {image_id!r}"
                )
        result, _ = _greedy_match(image_dets, image_gts, iou_threshold, class_aware=False)
        for det, gt, _ in result.pairs:
            counts[det.class_index][gt.class_index] += 1
        for gt in result.unmatched_ground_truths:
            counts[background][gt.class_index] += 1
        for det in result.unmatched_detections:
            counts[det.class_index][background] += 1
    return ConfusionMatrix(counts=tuple(tuple(row) for row in counts))


def pool_cv(
    folds: Sequence[tuple[Sequence[Detection], Mapping[str, Sequence[GroundTruthBox]]]],
) -> tuple[list[Detection], dict[str, tuple[GroundTruthBox, ...]]]:
    """Merge per-fold validation predictions into one dataset-wide set.

    Each fold contributes (detections, ground truths for its validation
    images). Folds must not share images: cross-validation predicts every
    image exactly once.

    Raises:
        InputError: if any image appears in more than one fold.
    """
    if not folds:
        raise InputError("pool_cv needs at least one fold")
    pooled_dets: list[Detection] = []
    pooled_gts: dict[str, tuple[GroundTruthBox, ...]] = {}
    seen: set[str] = set()
    for fold_index, (dets, gts) in enumerate(folds):
        fold_images = set(gts) | {d.image_id for d in dets}
        overlap = sorted(fold_images & seen)
        if overlap:
            raise InputError(
                f"image(s) predicted in more than one fold (fold {fold_index}): {overlap[:5]}"
            )
        seen |= fold_images
        pooled_dets.extend(dets)
        for image_id, boxes in gts.items():
            pooled_gts[image_id] = tuple(boxes)
    return pooled_dets, pooled_gts


def mean_cv(results: Sequence[EvaluationResult]) -> tuple[ClassMetrics, ...]:
    """Average per-fold metrics tables row by row, for comparison with pooling.

    Pooling (``pool_cv`` before a single evaluation) is the primary mode
    because it makes the targets column count the full dataset. This is
    the alternative reading: metric columns become arithmetic means over
    folds while targets still sum to full-dataset counts.

    Raises:
        InputError: empty input, or fold tables with mismatched row names.
    """
    if not results:
        raise InputError("mean_cv needs at least one fold result")
    names = [row.name for row in results[0].rows]
    for i, res in enumerate(results[1:], start=1):
        if [row.name for row in res.rows] != names:
            raise InputError(f"fold {i} metrics rows do not line up with fold 0")
    merged = []
    for ri, name in enumerate(names):
        rows = [res.rows[ri] for res in results]
        n = len(rows)
        merged.append(
            ClassMetrics(
                name=name,
                targets=sum(r.targets for r in rows),
                precision=sum(r.precision for r in rows) / n,
                recall=sum(r.recall for r in rows) / n,
                f1=sum(r.f1 for r in rows) / n,
                ap50=sum(r.ap50 for r in rows) / n,
                ap50_95=sum(r.ap50_95 for r in rows) / n,
            )
        )
    return tuple(merged)


def evaluate_detections(
    dets: Sequence[Detection],
    gts: Mapping[str, Sequence[GroundTruthBox]],
    names: Sequence[str],
    iou_threshold: float = DEFAULT_IOU_THRESHOLD,
    map_thresholds: Iterable[float] = MAP_THRESHOLDS,
) -> EvaluationResult:
    """Produce the full metrics table for one detection set.

    P/R/F1 are reported at the mean-F1-maximizing confidence threshold;
    AP columns integrate over all confidences. The aggregate row averages
    the per-class values (its F1 is the harmonic mean of the averaged
    precision and recall) and sums the targets.
    """
    class_count = len(names)
    if class_count == 0:
        raise InputError("names must not be empty")
    ladder = tuple(sorted(set(map_thresholds)))
    if not ladder:
        raise InputError("map_thresholds must not be empty")
    thresholds = tuple(sorted({*ladder, iou_threshold}))
    maps = map_at(dets, gts, class_count, thresholds)

    sweeps = class_sweeps(dets, gts, class_count, iou_threshold)
    if sweeps:
        op = best_operating_point(sweeps)
    else:
        op = OperatingPoint(threshold=0.0, mean_f1=0.0, per_class={})

    rows = []
    included = sorted(maps.per_class)
    for ci, name in enumerate(names):
        if ci not in maps.per_class:
            rows.append(ClassMetrics(name, 0, 0.0, 0.0, 0.0, 0.0, 0.0))
            continue
        precision, recall, f1 = op.per_class.get(ci, (0.0, 0.0, 0.0))
        aps = maps.per_class[ci]
        ap50_95 = sum(aps[t] for t in ladder) / len(ladder)
        rows.append(
            ClassMetrics(
                name=name,
                targets=sweeps[ci].targets if ci in sweeps else 0,
                precision=precision,
                recall=recall,
                f1=f1,
                ap50=aps[iou_threshold],
                ap50_95=ap50_95,
            )
        )

    if included:
        by_index = {ci: rows[ci] for ci in included}
        mean_p = sum(by_index[ci].precision for ci in included) / len(included)
        mean_r = sum(by_index[ci].recall for ci in included) / len(included)
        aggregate = ClassMetrics(
            name=AGGREGATE_ROW_NAME,
            targets=sum(r.targets for r in rows),
            precision=mean_p,
            recall=mean_r,
            f1=f1_score(mean_p, mean_r),
            ap50=sum(by_index[ci].ap50 for ci in included) / len(included),
            ap50_95=sum(by_index[ci].ap50_95 for ci in included) / len(included),
        )
    else:
        aggregate = ClassMetrics(AGGREGATE_ROW_NAME, 0, 0.0, 0.0, 0.0, 0.0, 0.0)
    return EvaluationResult(operating_threshold=op.threshold, rows=(aggregate, *rows))


def ground_truths_from_records(
    records: Sequence[ImageRecord],
    catalog: ClassCatalog,
) -> dict[str, tuple[GroundTruthBox, ...]]:
    """Turn annotated image records into the evaluator's ground-truth map."""
    gts = {}
    for rec in records:
        gts[rec.image_id] = tuple(
            GroundTruthBox(catalog.index_of(a.species), to_normalized(a.box, rec.size))
            for a in rec.annotations
        )
    return gts


def read_predictions_jsonl(path: str | Path) -> list[Detection]:
    """Read a predictions file, validating every line.

    Raises:
        InputError: malformed JSON, missing keys, or out-of-range values,
            reported with the 1-based line number.
    """
    dets = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise InputError(f"{path}:{lineno}: expected a JSON object")
        try:
            image_id = obj["image_id"]
            class_index = obj["class"]
            confidence = obj["conf"]
            box = obj["box"]
        except KeyError as exc:
            raise InputError(f"{path}:{lineno}: missing key {exc}") from exc
        if not isinstance(image_id, str):
            raise InputError(f"{path}:{lineno}: image_id must be a string")
        if not isinstance(class_index, int) or isinstance(class_index, bool):
            raise InputError(f"{path}:{lineno}: class must be an integer")
        if not isinstance(confidence, (int, float)) or isinstance(confidence, bool):
            raise InputError(f"{path}:{lineno}: conf must be a number")
        if not isinstance(box, list) or len(box) != 4:
            raise InputError(f"{path}:{lineno}: box must be a 4-element array")
        try:
            nbox = NormalizedBox(*(float(v) for v in box))
            dets.append(Detection(image_id, class_index, float(confidence), nbox))
        except (InputError, TypeError, ValueError) as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from exc
    return dets


def write_predictions_jsonl(dets: Sequence[Detection], path: str | Path) -> None:
    lines = []
    for det in dets:
        lines.append(
            json.dumps(
                {
                    "image_id": det.image_id,
                    "class": det.class_index,
                    "conf": det.confidence,
                    "box": [det.box.cx, det.box.cy, det.box.w, det.box.h],
                }
            )
        )
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def metrics_csv_text(result: EvaluationResult) -> str:
    lines = [METRICS_CSV_HEADER]
    for row in result.rows:
        lines.append(
            f"{row.name},{row.targets},{row.f1:.4f},{row.precision:.4f},"
            f"{row.recall:.4f},{row.ap50:.4f},{row.ap50_95:.4f}"
        )
    return "\n".join(lines) + "\n"


def write_metrics_csv(result: EvaluationResult, path: str | Path) -> None:
    Path(path).write_text(metrics_csv_text(result), encoding="utf-8")


def confusion_csv_text(
    matrix: ConfusionMatrix,
    names: Sequence[str],
    *,
    normalized: bool = False,
) -> str:
    """Render the matrix as CSV; columns are true classes, rows predicted."""
    if len(names) != matrix.background_index:
        raise InputError(
            f"matrix has {matrix.background_index} classes but {len(names)} names given"
        )
    labels = [*names, BACKGROUND_NAME]
    lines = ["predicted," + ",".join(labels)]
    cells = matrix.normalized() if normalized else matrix.counts
    for label, row in zip(labels, cells):
        if normalized:
            rendered = ",".join(f"{v:.3f}" for v in row)
        else:
            rendered = ",".join(str(v) for v in row)
        lines.append(f"{label},{rendered}")
    return "\n".join(lines) + "\n"


def write_confusion_csv(
    matrix: ConfusionMatrix,
    names: Sequence[str],
    path: str | Path,
    *,
    normalized: bool = False,
) -> None:
    Path(path).write_text(confusion_csv_text(matrix, names, normalized=normalized), encoding="utf-8")
