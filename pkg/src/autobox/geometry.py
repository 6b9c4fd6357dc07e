"""Axis-aligned box geometry: IoU, union, containment.

Boxes are 0-based with an exclusive right/bottom edge: a box covers pixel
columns [xmin, xmin+width) and rows [ymin, ymin+height).  Conversion to the
1-based inclusive XML convention happens only in :mod:`autobox.annotations`.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, order=True)
class Box:
    xmin: int
    ymin: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"box sides must be >= 1, got {self.width}x{self.height}")
        if self.xmin < 0 or self.ymin < 0:
            raise ValueError(f"box corner must be non-negative, got ({self.xmin},{self.ymin})")

    @property
    def xmax(self) -> int:
        """Exclusive right edge."""
        return self.xmin + self.width

    @property
    def ymax(self) -> int:
        """Exclusive bottom edge."""
        return self.ymin + self.height

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def aspect(self) -> float:
        """max(W/H, H/W), always >= 1."""
        return max(self.width / self.height, self.height / self.width)

    def fits_in(self, image_width: int, image_height: int) -> bool:
        return self.xmax <= image_width and self.ymax <= image_height

    def contains(self, other: "Box") -> bool:
        return (
            self.xmin <= other.xmin
            and self.ymin <= other.ymin
            and self.xmax >= other.xmax
            and self.ymax >= other.ymax
        )


def intersection_area(a: Box, b: Box) -> int:
    w = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    h = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    if w <= 0 or h <= 0:
        return 0
    return w * h


def iou(a: Box, b: Box) -> float:
    """Intersection over union; 0.0 for disjoint boxes, 1.0 iff equal."""
    inter = intersection_area(a, b)
    if inter == 0:
        return 0.0
    return inter / (a.area + b.area - inter)


def union_box(a: Box, b: Box) -> Box:
    """Smallest box containing both a and b."""
    xmin = min(a.xmin, b.xmin)
    ymin = min(a.ymin, b.ymin)
    return Box(
        xmin=xmin,
        ymin=ymin,
        width=max(a.xmax, b.xmax) - xmin,
        height=max(a.ymax, b.ymax) - ymin,
    )


def gap(a: Box, b: Box) -> int:
    """Largest axis separation between two boxes.

    Positive when the boxes are disjoint along some axis, 0 when they touch,
    negative when they overlap on both axes.
    """
    dx = max(a.xmin - b.xmax, b.xmin - a.xmax)
    dy = max(a.ymin - b.ymax, b.ymin - a.ymax)
    return max(dx, dy)
