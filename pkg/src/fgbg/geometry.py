"""Axis-aligned box arithmetic used by every other module.

Boxes carry integer pixel coordinates, half-open on the max edge: (x0, y0)
is the first pixel inside, (x1, y1) the first outside. Areas are exact
pixel counts and boxes that merely touch do not overlap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import DataError, NoBoxesError

__all__ = [
    "Box",
    "iou",
    "enclosing_frame",
    "union_pixel_area",
    "foreground_pixel_ratio",
    "frame_area_ratio",
    "clamp_box",
]


@dataclass(frozen=True, order=True)
class Box:
    """Half-open integer pixel rectangle [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if not all(isinstance(v, int) for v in (self.x0, self.y0, self.x1, self.y1)):
            raise DataError(f"box coordinates must be integers, got {self!r}")
        if self.x0 < 0 or self.y0 < 0:
            raise DataError(f"box coordinates must be non-negative, got {self!r}")
        if self.x0 >= self.x1 or self.y0 >= self.y1:
            raise DataError(f"box must have positive extent, got {self!r}")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return self.width * self.height

    def intersection_area(self, other: "Box") -> int:
        w = min(self.x1, other.x1) - max(self.x0, other.x0)
        h = min(self.y1, other.y1) - max(self.y0, other.y0)
        if w <= 0 or h <= 0:
            return 0
        return w * h

    def contains(self, other: "Box") -> bool:
        return (
            self.x0 <= other.x0
            and self.y0 <= other.y0
            and self.x1 >= other.x1
            and self.y1 >= other.y1
        )

    def shift(self, dx: int, dy: int) -> "Box":
        return Box(self.x0 + dx, self.y0 + dy, self.x1 + dx, self.y1 + dy)

    def clip(self, width: int, height: int) -> "Box":
        """Clip to an image of the given size; raises if nothing remains."""
        x0, y0 = max(self.x0, 0), max(self.y0, 0)
        x1, y1 = min(self.x1, width), min(self.y1, height)
        if x0 >= x1 or y0 >= y1:
            raise DataError(f"box {self!r} lies outside a {width}x{height} image")
        return Box(x0, y0, x1, y1)

    def within(self, width: int, height: int) -> bool:
        return self.x1 <= width and self.y1 <= height

    def as_list(self) -> list[int]:
        return [self.x0, self.y0, self.x1, self.y1]

    @classmethod
    def from_sequence(cls, coords: Sequence[int]) -> "Box":
        if len(coords) != 4:
            raise DataError(f"box needs 4 coordinates, got {coords!r}")
        return cls(int(coords[0]), int(coords[1]), int(coords[2]), int(coords[3]))


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes, in [0, 1]. Symmetric."""
    inter = a.intersection_area(b)
    if inter == 0:
        return 0.0
    return inter / (a.area + b.area - inter)


def enclosing_frame(boxes: Iterable[Box]) -> Box:
    """Smallest rectangle containing every input box."""
    boxes = list(boxes)
    if not boxes:
        raise NoBoxesError("cannot compute an enclosing frame without boxes")
    return Box(
        min(b.x0 for b in boxes),
        min(b.y0 for b in boxes),
        max(b.x1 for b in boxes),
        max(b.y1 for b in boxes),
    )


def union_pixel_area(boxes: Sequence[Box]) -> int:
    """Exact pixel count of the union of boxes (overlap counted once).

    Sweep over compressed x-coordinates; within each vertical slab the
    union of y-intervals is summed. Integer-exact, so it matches a
    rasterization oracle bit for bit.
    """
    boxes = list(boxes)
    if not boxes:
        return 0
    xs = sorted({b.x0 for b in boxes} | {b.x1 for b in boxes})
    total = 0
    for left, right in zip(xs, xs[1:]):
        spans = sorted(
            (b.y0, b.y1) for b in boxes if b.x0 <= left and b.x1 >= right
        )
        if not spans:
            continue
        covered = 0
        cur_lo, cur_hi = spans[0]
        for lo, hi in spans[1:]:
            if lo > cur_hi:
                covered += cur_hi - cur_lo
                cur_lo, cur_hi = lo, hi
            else:
                cur_hi = max(cur_hi, hi)
        covered += cur_hi - cur_lo
        total += covered * (right - left)
    return total


def _image_hw(sample) -> tuple[int, int]:
    h, w = sample.image.shape[:2]
    return h, w


def foreground_pixel_ratio(sample) -> float:
    """|union of box pixels| / |image pixels|; 0.0 when the sample has no boxes."""
    h, w = _image_hw(sample)
    if not sample.boxes:
        return 0.0
    return union_pixel_area(sample.boxes) / (h * w)


def frame_area_ratio(sample) -> float:
    """area(enclosing frame) / area(image). Requires at least one box."""
    h, w = _image_hw(sample)
    frame = enclosing_frame(sample.boxes)
    return frame.area / (h * w)


def clamp_box(box: Box, width: int, height: int) -> Box:
    """Clamp a raw annotation to image bounds (ingestion-time only)."""
    return box.clip(width, height)
