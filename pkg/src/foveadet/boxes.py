"""Axis-aligned boxes in pixel coordinates."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned box given by its top-left corner and extent, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"Box2D.{name} must be finite")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"Box2D needs positive extent, got w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def translate(self, du: float, dv: float) -> Box2D:
        return Box2D(self.x + du, self.y + dv, self.w, self.h)

    def intersect(self, other: Box2D) -> Box2D | None:
        """Overlap rectangle, or None when the boxes do not overlap."""
        x1 = max(self.x, other.x)
        y1 = max(self.y, other.y)
        x2 = min(self.x2, other.x2)
        y2 = min(self.y2, other.y2)
        if x2 <= x1 or y2 <= y1:
            return None
        return Box2D(x1, y1, x2 - x1, y2 - y1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


def intersection_area(a: Box2D, b: Box2D) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: Box2D, b: Box2D) -> float:
    """Intersection over union of two boxes; 0.0 for disjoint boxes."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)
