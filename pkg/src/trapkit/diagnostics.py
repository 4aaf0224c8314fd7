"""Reference loss formulas, training-log parsing, and plateau detection.

The loss functions here are deliberately simple reference formulas (MSE
box regression, plain cross-entropy classification, squared-error
objectness). They are diagnostics for inspecting training behaviour, not
a reimplementation of any detector's internal composite loss.

Training logs travel as CSV with header
``epoch,box_loss,cls_loss,obj_loss,precision,recall,f1,map50,map50_95``
(LF endings, decimal points, no thousands separators). The two mAP
columns are optional: the header may omit them and cells may be empty.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .errors import InputError
from .geometry import NormalizedBox

DEFAULT_PLATEAU_WINDOW = 9
DEFAULT_PLATEAU_EPSILON = 0.01
_PROBABILITY_FLOOR = 1e-12
_DISTRIBUTION_TOLERANCE = 1e-9

EPOCH_LOG_HEADER = "epoch,box_loss,cls_loss,obj_loss,precision,recall,f1,map50,map50_95"
_SHORT_HEADER = "epoch,box_loss,cls_loss,obj_loss,precision,recall,f1"


def _check_rate(value: float, name: str) -> float:
    if not 0.0 <= value <= 1.0:
        raise InputError(f"{name} must be in [0, 1], got {value}")
    return value


@dataclass(frozen=True)
class EpochLog:
    """One training epoch's losses and validation metrics."""

    epoch: int
    box_loss: float
    cls_loss: float
    obj_loss: float
    precision: float
    recall: float
    f1: float
    map50: Optional[float] = None
    map50_95: Optional[float] = None

    def __post_init__(self) -> None:
        if self.epoch < 0:
            raise InputError(f"epoch must be >= 0, got {self.epoch}")
        for name in ("box_loss", "cls_loss", "obj_loss"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("precision", "recall", "f1"):
            _check_rate(getattr(self, name), name)
        for name in ("map50", "map50_95"):
            value = getattr(self, name)
            if value is not None:
                _check_rate(value, name)


def bbox_regression_loss(pred: NormalizedBox, target: NormalizedBox) -> float:
    """Mean squared error over the four box components (cx, cy, w, h)."""
    diffs = (
        pred.cx - target.cx,
        pred.cy - target.cy,
        pred.w - target.w,
        pred.h - target.h,
    )
    return sum(d * d for d in diffs) / 4.0


def classification_loss(pred: Sequence[float], true_class: int) -> float:
    """Cross-entropy of a predicted class distribution against the true class.

    ``pred`` must be a probability vector (entries >= 0, summing to 1
    within 1e-9). The picked probability is clamped below at 1e-12 before
    the logarithm, so the loss is always finite.
    """
    if not pred:
        raise InputError("class distribution must be non-empty")
    if any(p < 0 for p in pred):
        raise InputError("class probabilities must be >= 0")
    total = sum(pred)
    if abs(total - 1.0) > _DISTRIBUTION_TOLERANCE:
        raise InputError(f"class probabilities must sum to 1, got {total}")
    if not 0 <= true_class < len(pred):
        raise InputError(f"true_class {true_class} out of range for {len(pred)} classes")
    return -math.log(max(pred[true_class], _PROBABILITY_FLOOR))


def objectness_loss(pred_score: float, target: int) -> float:
    """Squared error between a confidence score and a 0/1 objectness target."""
    _check_rate(pred_score, "pred_score")
    if target not in (0, 1):
        raise InputError(f"objectness target must be 0 or 1, got {target}")
    return (pred_score - target) ** 2


def total_loss(
    box_terms: Sequence[float],
    cls_terms: Sequence[float],
    obj_terms: Sequence[float],
) -> float:
    """Sum of the three per-component means.

    Each component is averaged over its own terms first, so the total does
    not grow with batch size. A component with no terms contributes 0.

    Raises:
        InputError: if all three term lists are empty.
    """
    if not box_terms and not cls_terms and not obj_terms:
        raise InputError("total_loss needs at least one term")
    total = 0.0
    for terms in (box_terms, cls_terms, obj_terms):
        if terms:
            total += sum(terms) / len(terms)
    return total


def _parse_float(cell: str, lineno: int, column: str) -> float:
    try:
        return float(cell)
    except ValueError as exc:
        raise InputError(f"line {lineno}: column {column} is not a number: {cell!r}") from exc


def parse_training_log(path: str | Path) -> list[EpochLog]:
    """Read and validate an epoch-log CSV, returning an epoch-sorted series.

    Raises:
        InputError: malformed header or row, duplicate epoch, negative
            loss, or out-of-range metric, all reported with line numbers.
    """
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise InputError(f"{path}: empty file, expected a header row")
    header = lines[0].strip()
    if header == EPOCH_LOG_HEADER:
        with_map = True
    elif header == _SHORT_HEADER:
        with_map = False
    else:
        raise InputError(f"{path}: line 1: unrecognized header {header!r}")
    columns = header.split(",")

    logs: list[EpochLog] = []
    seen_epochs: dict[int, int] = {}
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        cells = raw.split(",")
        if len(cells) != len(columns):
            raise InputError(
                f"{path}: line {lineno}: expected {len(columns)} fields, got {len(cells)}"
            )
        try:
            epoch = int(cells[0])
        except ValueError as exc:
            raise InputError(f"{path}: line {lineno}: epoch is not an integer: {cells[0]!r}") from exc
        if epoch in seen_epochs:
            raise InputError(
                f"{path}: line {lineno}: duplicate epoch {epoch} (first seen on line "
                f"{seen_epochs[epoch]})"
            )
        seen_epochs[epoch] = lineno
        values = [_parse_float(c, lineno, columns[i + 1]) for i, c in enumerate(cells[1:7])]
        optional: list[Optional[float]] = [None, None]
        if with_map:
            for i, cell in enumerate(cells[7:9]):
                if cell.strip():
                    optional[i] = _parse_float(cell, lineno, columns[7 + i])
        try:
            logs.append(EpochLog(epoch, *values, map50=optional[0], map50_95=optional[1]))
        except InputError as exc:
            raise InputError(f"{path}: line {lineno}: {exc}") from exc
    logs.sort(key=lambda log: log.epoch)
    return logs


def training_log_csv_text(logs: Sequence[EpochLog]) -> str:
    """Render epoch logs in the CSV interchange format (6-decimal floats)."""
    lines = [EPOCH_LOG_HEADER]
    for log in sorted(logs, key=lambda entry: entry.epoch):
        cells = [
            str(log.epoch),
            f"{log.box_loss:.6f}",
            f"{log.cls_loss:.6f}",
            f"{log.obj_loss:.6f}",
            f"{log.precision:.6f}",
            f"{log.recall:.6f}",
            f"{log.f1:.6f}",
            "" if log.map50 is None else f"{log.map50:.6f}",
            "" if log.map50_95 is None else f"{log.map50_95:.6f}",
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def write_training_log(logs: Sequence[EpochLog], path: str | Path) -> None:
    Path(path).write_text(training_log_csv_text(logs), encoding="utf-8")


def detect_plateau(
    series: Sequence[float],
    window: int = DEFAULT_PLATEAU_WINDOW,
    epsilon: float = DEFAULT_PLATEAU_EPSILON,
) -> Optional[int]:
    """Find the first index after which the series stops changing.

    Returns the smallest index ``e`` such that every step from ``e+1``
    through ``e + window`` (clipped to the end of the series, at least one
    step must exist) has relative change
    ``|v[t] - v[t-1]| / max(|v[t-1]|, 1e-12) < epsilon``. Returns None if
    no index qualifies.

    Raises:
        InputError: if ``window < 1`` or ``len(series) <= window``.
    """
    if window < 1:
        raise InputError(f"window must be >= 1, got {window}")
    if len(series) <= window:
        raise InputError(f"series of length {len(series)} is too short for window {window}")
    quiet = [
        abs(series[t] - series[t - 1]) / max(abs(series[t - 1]), 1e-12) < epsilon
        for t in range(1, len(series))
    ]
    for e in range(len(series) - 1):
        span = quiet[e : e + window]
        if span and all(span):
            return e
    return None
