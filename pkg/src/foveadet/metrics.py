"""VOC-2010 style average precision at a fixed IoU threshold.

Detections are matched greedily in descending score order, each one taking
the unmatched ground-truth box it overlaps most. The AP is the area under the
monotone precision envelope, summed at every recall step ("all points"
interpolation, not the older 11-point rule).
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, NamedTuple, Sequence

from foveadet.boxes import iou
from foveadet.detector import Detection
from foveadet.records import FrameId, GroundTruthBox

__all__ = [
    "APResult",
    "GroundTruthBox",
    "Match",
    "PRCurve",
    "average_precision",
    "evaluate",
    "match_detections",
    "pr_curve",
]


class Match(NamedTuple):
    frame_id: FrameId
    detection: Detection
    is_tp: bool


@dataclass(frozen=True)
class PRCurve:
    """Precision/recall after each detection, in descending score order.

    ``tp_cum``/``fp_cum`` keep the integer counts so AP can be summed exactly.
    ``recall_defined`` is False when there is no ground truth at all; recall
    is then reported as 0.
    """

    points: tuple[tuple[float, float], ...]
    n_gt: int
    scores: tuple[float, ...] = ()
    tp_cum: tuple[int, ...] = ()
    fp_cum: tuple[int, ...] = ()
    recall_defined: bool = True

    @property
    def recall(self) -> list[float]:
        return [r for r, _ in self.points]

    @property
    def precision(self) -> list[float]:
        return [p for _, p in self.points]


@dataclass(frozen=True)
class APResult:
    ap: float
    curve: PRCurve
    tp: int
    fp: int
    n_gt: int
    defined: bool = True
    matches: tuple[Match, ...] = field(default=(), repr=False)


def _frame_order(ids: Iterable[FrameId]) -> dict:
    uniq = list(dict.fromkeys(ids))
    try:
        ordered = sorted(uniq)
    except TypeError:
        ordered = sorted(uniq, key=lambda f: (type(f).__name__, str(f)))
    return {f: i for i, f in enumerate(ordered)}


def match_detections(
    dets: Sequence[tuple[FrameId, Detection]],
    gts: Sequence[GroundTruthBox],
    iou_thresh: float = 0.5,
) -> list[Match]:
    """Label every detection true or false positive.

    Within a frame, detections are taken by descending score (ties keep input
    order). A detection is a true positive when the unmatched ground truth of
    its class with the largest IoU reaches ``iou_thresh``; that ground truth is
    then consumed. The result is sorted by (score desc, frame id, input order).
    """
    by_frame: dict = defaultdict(list)
    for gt in gts:
        by_frame[gt.frame_id].append(gt)
    order = _frame_order([f for f, _ in dets])

    indexed = sorted(enumerate(dets), key=lambda t: (-t[1][1].score, order[t[1][0]], t[0]))
    used: dict = defaultdict(set)
    out = []
    for _, (frame_id, det) in indexed:
        best, best_k = -1.0, None
        for k, gt in enumerate(by_frame.get(frame_id, ())):
            if k in used[frame_id] or gt.class_label != det.class_label:
                continue
            o = iou(det.box, gt.box)
            if o > best:
                best, best_k = o, k
        hit = best_k is not None and best >= iou_thresh
        if hit:
            used[frame_id].add(best_k)
        out.append(Match(frame_id, det, hit))
    return out


def pr_curve(labeled: Sequence, n_gt: int) -> PRCurve:
    """Cumulative precision and recall over detections sorted by score.

    ``labeled`` holds :class:`Match` items or ``(Detection, is_tp)`` pairs.
    """
    if n_gt < 0:
        raise ValueError("n_gt must be >= 0")
    pairs = [(m.detection, m.is_tp) if isinstance(m, Match) else (m[0], bool(m[1])) for m in labeled]
    pairs = sorted(pairs, key=lambda p: -p[0].score)
    tp = fp = 0
    points, scores, tps, fps = [], [], [], []
    for det, is_tp in pairs:
        if is_tp:
            tp += 1
        else:
            fp += 1
        recall = tp / n_gt if n_gt else 0.0
        points.append((recall, tp / (tp + fp)))
        scores.append(det.score)
        tps.append(tp)
        fps.append(fp)
    return PRCurve(tuple(points), n_gt, tuple(scores), tuple(tps), tuple(fps), recall_defined=n_gt > 0)


def average_precision(curve: PRCurve) -> float:
    """Area under the precision envelope, accumulated in exact rationals."""
    if not curve.points or curve.n_gt == 0:
        return 0.0
    if not curve.tp_cum:
        return _average_precision_float(curve)
    precisions = [Fraction(t, t + f) for t, f in zip(curve.tp_cum, curve.fp_cum)]
    envelope = precisions[:]
    for k in range(len(envelope) - 2, -1, -1):
        envelope[k] = max(envelope[k], envelope[k + 1])
    area = Fraction(0)
    prev_tp = 0
    for k, t in enumerate(curve.tp_cum):
        if t > prev_tp:
            area += Fraction(t - prev_tp, curve.n_gt) * envelope[k]
            prev_tp = t
    return float(area)


def _average_precision_float(curve: PRCurve) -> float:
    # curves rebuilt from (recall, precision) pairs carry no counts
    rec = [0.0] + [r for r, _ in curve.points]
    prec = [p for _, p in curve.points]
    env = prec[:]
    for k in range(len(env) - 2, -1, -1):
        env[k] = max(env[k], env[k + 1])
    return sum((rec[k + 1] - rec[k]) * env[k] for k in range(len(env)))


def evaluate(
    dets: Sequence[tuple[FrameId, Detection]],
    gts: Sequence[GroundTruthBox],
    iou_thresh: float = 0.5,
) -> APResult:
    matches = match_detections(dets, gts, iou_thresh)
    curve = pr_curve(matches, len(gts))
    tp = sum(1 for m in matches if m.is_tp)
    return APResult(
        ap=average_precision(curve),
        curve=curve,
        tp=tp,
        fp=len(matches) - tp,
        n_gt=len(gts),
        defined=len(gts) > 0,
        matches=tuple(matches),
    )
