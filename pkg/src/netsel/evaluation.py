"""COCO-style detection scoring: IoU, greedy matching, 101-point AP, mAP.

The protocol follows the COCO evaluator closely (greedy by score, IoU sweep
0.50:0.05:0.95, 101 recall points) but is not meant to be bit-identical to it.
Score ties are broken by input order everywhere.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional, Sequence

from .core import (
    NO_GROUND_TRUTH,
    BoundingBox,
    Detection,
    GroundTruthBox,
    MixedImage,
    PerImageScore,
    SizeBucket,
    area_bucket,
)
from .ingest import Dataset, DetectionSet

DEFAULT_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = 101


def iou(a: BoundingBox, b: BoundingBox) -> float:
    ix = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    iy = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


@dataclass
class MatchResult:
    """Outcome of matching one image/category.

    ``pairs`` are true positives ``(det_index, gt_index, iou)``. Detections
    that landed on an ignored box go to ``ignored_detections`` and count as
    neither TP nor FP; ignored ground truth is listed in ``ignored_ground_truth``
    and never counts as a miss.
    """

    pairs: list[tuple[int, int, float]] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)
    unmatched_ground_truth: list[int] = field(default_factory=list)
    ignored_detections: list[int] = field(default_factory=list)
    ignored_ground_truth: list[int] = field(default_factory=list)


def _score_order(dets: Sequence[Detection]) -> list[int]:
    return sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruthBox],
    iou_threshold: float,
    bucket: Optional[SizeBucket] = None,
) -> MatchResult:
    keys = {(d.image_id, d.category_id) for d in dets} | {(g.image_id, g.category_id) for g in gts}
    if len(keys) > 1:
        raise MixedImage(f"records span several image/category pairs: {sorted(map(repr, keys))}")

    ignored = [g.ignored or (bucket is not None and area_bucket(g.box) != bucket) for g in gts]
    taken = [False] * len(gts)
    result = MatchResult()

    for d in _score_order(dets):
        box = dets[d].box
        best, best_iou = None, -1.0
        # non-ignored candidates first; an ignored box only absorbs leftovers
        for want_ignored in (False, True):
            for g, gt in enumerate(gts):
                if taken[g] or ignored[g] != want_ignored:
                    continue
                overlap = iou(box, gt.box)
                if overlap >= iou_threshold and overlap > best_iou:
                    best, best_iou = g, overlap
            if best is not None:
                break
        if best is None:
            result.unmatched_detections.append(d)
        elif ignored[best]:
            taken[best] = True
            result.ignored_detections.append(d)
        else:
            taken[best] = True
            result.pairs.append((d, best, best_iou))

    for g in range(len(gts)):
        if ignored[g]:
            result.ignored_ground_truth.append(g)
        elif not taken[g]:
            result.unmatched_ground_truth.append(g)
    return result


def average_precision(flags: Iterable[tuple[float, bool]], total_positives: int) -> Optional[float]:
    """101-point interpolated AP from ``(score, is_tp)`` pairs in input order.

    Pairs are stably sorted by descending score, so callers control tie order.
    Returns ``None`` when there are no positives.
    """
    if total_positives == 0:
        return NO_GROUND_TRUTH
    ordered = sorted(flags, key=lambda f: -f[0])
    tp = fp = 0
    recall_hits, precisions = [], []
    for _, is_tp in ordered:
        if is_tp:
            tp += 1
        else:
            fp += 1
        recall_hits.append(tp)
        precisions.append(tp / (tp + fp))
    for i in range(len(precisions) - 2, -1, -1):
        if precisions[i] < precisions[i + 1]:
            precisions[i] = precisions[i + 1]

    picked = []
    i = 0
    n = len(precisions)
    last = RECALL_POINTS - 1
    for k in range(RECALL_POINTS):
        # recall >= k/100, compared in integers to dodge float grid error
        while i < n and recall_hits[i] * last < k * total_positives:
            i += 1
        if i == n:
            break
        picked.append(precisions[i])
    return math.fsum(picked) / RECALL_POINTS


@dataclass
class EvalReport:
    map_overall: Optional[float]
    map_small: Optional[float] = None
    map_medium: Optional[float] = None
    map_large: Optional[float] = None
    per_class: dict[Hashable, float] = field(default_factory=dict)


def _group(dataset: Dataset, detset: DetectionSet):
    dets = defaultdict(list)
    for d in detset.detections:
        dets[(d.image_id, d.category_id)].append(d)
    gts = defaultdict(list)
    for g in dataset.ground_truth:
        gts[(g.image_id, g.category_id)].append(g)
    return dets, gts


def _class_ap(
    image_ids: Sequence[Hashable],
    category_id: Hashable,
    dets: dict,
    gts: dict,
    threshold: float,
    bucket: Optional[SizeBucket],
) -> Optional[float]:
    flags = []
    positives = 0
    for image_id in image_ids:
        key = (image_id, category_id)
        d, g = dets.get(key, ()), gts.get(key, ())
        if not d and not g:
            continue
        m = match_detections(d, g, threshold, bucket)
        positives += len(m.pairs) + len(m.unmatched_ground_truth)
        tp = {i for i, _, _ in m.pairs}
        skip = set(m.ignored_detections)
        for i in _score_order(d):
            if i not in skip:
                flags.append((d[i].score, i in tp))
    return average_precision(flags, positives)


def _mean(values: Iterable[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    if not present:
        return NO_GROUND_TRUTH
    return math.fsum(present) / len(present)


def _map(
    image_ids: Sequence[Hashable],
    categories: Iterable[Hashable],
    dets: dict,
    gts: dict,
    thresholds: Sequence[float],
    bucket: Optional[SizeBucket],
) -> tuple[Optional[float], dict]:
    per_class = {}
    for cat in categories:
        aps = [_class_ap(image_ids, cat, dets, gts, t, bucket) for t in thresholds]
        if aps and aps[0] is not None:
            per_class[cat] = math.fsum(aps) / len(aps)
    return _mean(per_class.values()), per_class


def evaluate_dataset(
    dataset: Dataset,
    detset: DetectionSet,
    iou_thresholds: Sequence[float] = DEFAULT_IOU_THRESHOLDS,
    buckets: bool = True,
) -> EvalReport:
    dets, gts = _group(dataset, detset)
    image_ids = dataset.image_ids
    overall, per_class = _map(image_ids, dataset.categories, dets, gts, iou_thresholds, None)
    report = EvalReport(overall, per_class=per_class)
    if buckets:
        for bucket in SizeBucket:
            value, _ = _map(image_ids, dataset.categories, dets, gts, iou_thresholds, bucket)
            setattr(report, f"map_{bucket.value}", value)
    return report


def evaluate_per_image(
    dataset: Dataset,
    detset: DetectionSet,
    iou_thresholds: Sequence[float] = DEFAULT_IOU_THRESHOLDS,
    bucket: Optional[SizeBucket] = None,
    latency_ms: Optional[float] = None,
) -> list[PerImageScore]:
    """Per-image mAP over the categories present in that image's ground truth."""
    dets, gts = _group(dataset, detset)
    scores = []
    for image_id in dataset.image_ids:
        present = []
        for g in dataset.boxes_for(image_id):
            if g.category_id not in present:
                present.append(g.category_id)
        value, _ = _map([image_id], present, dets, gts, iou_thresholds, bucket)
        scores.append(PerImageScore(image_id, detset.network_id, value, latency_ms))
    return scores


def report_row(report: EvalReport) -> dict[str, str]:
    """Accuracy columns of a profile row; missing buckets are written empty."""

    def fmt(v):
        return "" if v is None else repr(v)

    row = {
        "map_overall": fmt(report.map_overall),
        "map_small": fmt(report.map_small),
        "map_medium": fmt(report.map_medium),
        "map_large": fmt(report.map_large),
    }
    for cat in sorted(report.per_class, key=str):
        row[f"class:{cat}"] = fmt(report.per_class[cat])
    return row
