"""Bounding-box representations, conversions, and IoU.

Two box formats are used throughout the toolkit:

* :class:`PixelBox`: corner coordinates in pixels, origin top-left, as
  stored by annotation tools.
* :class:`NormalizedBox`: center/size as fractions of the image, the
  detector's label format.

Label files use one object per line::

    <class_index> <cx> <cy> <w> <h>

with single ASCII spaces, fixed 6-decimal formatting, and LF endings.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InputError

# Slack for boxes that should touch the image edge exactly but drifted
# due to floating-point arithmetic.
EDGE_TOLERANCE = 1e-9

# 6-decimal formatting can push a stored edge up to ~1e-6 outside [0,1];
# parsing recenters within this slack instead of rejecting the line.
_QUANTIZATION_SLACK = 2e-6


@dataclass(frozen=True)
class ImageSize:
    """Pixel dimensions of one image."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise InputError(
                f"image size must be at least 1x1, got {self.width}x{self.height}"
            )

    @property
    def megapixels(self) -> float:
        return self.width * self.height / 1e6


@dataclass(frozen=True)
class PixelBox:
    """Axis-aligned box in pixel corner coordinates (continuous, sub-pixel allowed)."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if min(self.x_min, self.y_min, self.x_max, self.y_max) < 0:
            raise InputError(f"box coordinates must be non-negative: {self}")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise InputError(f"box must have strictly positive area: {self}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def fits(self, size: ImageSize) -> bool:
        """True when the box lies within [0, width] x [0, height]."""
        return self.x_max <= size.width and self.y_max <= size.height


@dataclass(frozen=True)
class NormalizedBox:
    """Center/size box as fractions of image width and height."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (0 < self.w <= 1 and 0 < self.h <= 1):
            raise InputError(f"box width/height must be in (0, 1]: {self}")
        if self.cx - self.w / 2 < -EDGE_TOLERANCE or self.cx + self.w / 2 > 1 + EDGE_TOLERANCE:
            raise InputError(f"box extends past the horizontal image bounds: {self}")
        if self.cy - self.h / 2 < -EDGE_TOLERANCE or self.cy + self.h / 2 > 1 + EDGE_TOLERANCE:
            raise InputError(f"box extends past the vertical image bounds: {self}")


def _corner_iou(
    ax0: float, ay0: float, ax1: float, ay1: float,
    bx0: float, by0: float, bx1: float, by1: float,
) -> float:
    inter_w = min(ax1, bx1) - max(ax0, bx0)
    inter_h = min(ay1, by1) - max(ay0, by0)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0
    inter = inter_w * inter_h
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def iou(a: PixelBox, b: PixelBox) -> float:
    """Intersection over union of two pixel boxes; 0 when disjoint."""
    return _corner_iou(a.x_min, a.y_min, a.x_max, a.y_max,
                       b.x_min, b.y_min, b.x_max, b.y_max)


def normalized_iou(a: NormalizedBox, b: NormalizedBox) -> float:
    """IoU of two normalized boxes of the same image.

    Normalizing scales x and y independently but scales every area by the
    same factor, so the ratio equals the pixel-space IoU.
    """
    return _corner_iou(
        a.cx - a.w / 2, a.cy - a.h / 2, a.cx + a.w / 2, a.cy + a.h / 2,
        b.cx - b.w / 2, b.cy - b.h / 2, b.cx + b.w / 2, b.cy + b.h / 2,
    )


def to_normalized(box: PixelBox, size: ImageSize) -> NormalizedBox:
    """Convert a pixel box to center/size fractions of ``size``.

    Raises:
        InputError: if the box extends past the image bounds. Out-of-bounds
            annotations are rejected, never silently clamped.
    """
    if not box.fits(size):
        raise InputError(
            f"box {box} exceeds image bounds {size.width}x{size.height}"
        )
    return NormalizedBox(
        cx=(box.x_min + box.x_max) / (2 * size.width),
        cy=(box.y_min + box.y_max) / (2 * size.height),
        w=(box.x_max - box.x_min) / size.width,
        h=(box.y_max - box.y_min) / size.height,
    )


def to_pixel(box: NormalizedBox, size: ImageSize) -> PixelBox:
    """Inverse of :func:`to_normalized` up to floating-point rounding."""
    half_w = box.w * size.width / 2
    half_h = box.h * size.height / 2
    cx = box.cx * size.width
    cy = box.cy * size.height
    # Negative zero from rounding would fail PixelBox validation.
    return PixelBox(
        x_min=max(cx - half_w, 0.0),
        y_min=max(cy - half_h, 0.0),
        x_max=cx + half_w,
        y_max=cy + half_h,
    )


def format_label_line(class_index: int, box: NormalizedBox) -> str:
    """Render one label-file line (no trailing newline)."""
    if class_index < 0:
        raise InputError(f"class index must be non-negative, got {class_index}")
    return f"{class_index} {box.cx:.6f} {box.cy:.6f} {box.w:.6f} {box.h:.6f}"


def parse_label_line(line: str) -> tuple[int, NormalizedBox]:
    """Parse one label-file line into (class_index, box).

    Accepts the small out-of-bounds drift introduced by 6-decimal
    formatting and recenters the box; anything beyond that slack is
    rejected.
    """
    parts = line.split()
    if len(parts) != 5:
        raise InputError(f"expected 5 fields in label line, got {len(parts)}: {line!r}")
    try:
        class_index = int(parts[0])
        cx, cy, w, h = (float(p) for p in parts[1:])
    except ValueError as exc:
        raise InputError(f"malformed label line {line!r}: {exc}") from exc
    if class_index < 0:
        raise InputError(f"negative class index in label line: {line!r}")
    if not (0 < w <= 1 + _QUANTIZATION_SLACK and 0 < h <= 1 + _QUANTIZATION_SLACK):
        raise InputError(f"box width/height out of range in label line: {line!r}")
    w = min(w, 1.0)
    h = min(h, 1.0)
    if (cx - w / 2 < -_QUANTIZATION_SLACK or cx + w / 2 > 1 + _QUANTIZATION_SLACK
            or cy - h / 2 < -_QUANTIZATION_SLACK or cy + h / 2 > 1 + _QUANTIZATION_SLACK):
        raise InputError(f"box out of image bounds in label line: {line!r}")
    cx = min(max(cx, w / 2), 1 - w / 2)
    cy = min(max(cy, h / 2), 1 - h / 2)
    return class_index, NormalizedBox(cx=cx, cy=cy, w=w, h=h)
