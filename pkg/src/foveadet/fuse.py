"""Merge per-source detections into one duplicate-free list.

Rows are visited in a fixed order: the full image first, then crops from the
largest (``j = 1``) to the smallest. Every box of the first row that has any
detection is kept as is. Each later box is kept only if its IoU with every
box kept so far is at most the threshold; an IoU of exactly the threshold is
not treated as a duplicate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from foveadet.boxes import Box2D, iou
from foveadet.detector import Detection
from foveadet.errors import DuplicateSourceError

__all__ = [
    "Box2D",
    "DetectionMatrix",
    "FusedDetections",
    "build_matrix",
    "iou",
    "overlap_filter",
]


@dataclass(frozen=True)
class DetectionMatrix:
    rows: tuple[tuple[int, tuple[Detection, ...]], ...] = ()

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def sources(self) -> list[int]:
        return [s for s, _ in self.rows]

    def detections(self) -> list[Detection]:
        return [d for _, row in self.rows for d in row]


@dataclass(frozen=True)
class FusedDetections:
    accepted: tuple[Detection, ...] = ()

    def __len__(self) -> int:
        return len(self.accepted)

    def __iter__(self):
        return iter(self.accepted)


def build_matrix(per_source: Iterable[tuple[int, Sequence[Detection]]]) -> DetectionMatrix:
    rows = []
    seen = set()
    for source, dets in per_source:
        if source in seen:
            raise DuplicateSourceError(f"source {source} given twice")
        seen.add(source)
        rows.append((int(source), tuple(dets)))
    rows.sort(key=lambda r: r[0])
    return DetectionMatrix(tuple(rows))


def _filter_rows(rows: Sequence[Sequence[Detection]], thresh: float) -> list[Detection]:
    accepted: list[Detection] = []
    seeded = False
    for row in rows:
        if not row:
            continue
        if not seeded:
            accepted.extend(row)
            seeded = True
            continue
        for det in row:
            if all(iou(det.box, a.box) <= thresh for a in accepted):
                accepted.append(det)
    return accepted


def overlap_filter(m: DetectionMatrix, thresh: float = 0.5, per_class: bool = False) -> FusedDetections:
    """Sequential duplicate suppression over the matrix rows.

    With ``per_class`` the rule runs independently for every class label and
    the survivors are returned in their original matrix order.
    """
    rows = [row for _, row in m.rows]
    if not per_class:
        return FusedDetections(tuple(_filter_rows(rows, thresh)))
    labels = sorted({d.class_label for row in rows for d in row})
    keep_ids: set[int] = set()
    for label in labels:
        sub = [[d for d in row if d.class_label == label] for row in rows]
        keep_ids.update(id(d) for d in _filter_rows(sub, thresh))
    return FusedDetections(tuple(d for row in rows for d in row if id(d) in keep_ids))
