"""Detection and counting evaluation: IoU, AP/mAP, MAE and sMAPE.

AP follows the COCO convention: detections sorted by descending score
(ties keep input order), each greedily matched to the unmatched ground
truth of the same image with the highest IoU at or above the threshold,
and the precision-recall curve integrated on a 101-point recall grid.
mAP averages AP over IoU thresholds 0.50:0.05:0.95 and over every class
that has at least one ground truth.
"""

from __future__ import annotations

import io
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .clusters import BBox, intersection_area

IOU_THRESHOLDS = [t / 100 for t in range(50, 100, 5)]
RECALL_GRID = [r / 100 for r in range(0, 101)]


@dataclass(frozen=True)
class Detection:
    image_id: int
    category_id: int
    bbox: BBox
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    image_id: int
    category_id: int
    bbox: BBox


@dataclass
class MetricsReport:
    map: float
    ap_table: dict[int, dict[float, float]]  # class -> iou threshold -> AP
    mae: float
    smape: float
    pairs: list[tuple[int, int, int]] = field(default_factory=list)  # (image, true, pred)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes."""
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    return inter / union


def _match_greedy(dets: list[Detection], gts: list[GroundTruth], iou_thresh: float):
    """True/false-positive flags for score-sorted detections."""
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    gts_by_image: dict[int, list[int]] = defaultdict(list)
    for gi, gt in enumerate(gts):
        gts_by_image[gt.image_id].append(gi)
    matched = [False] * len(gts)
    tp = np.zeros(len(dets), dtype=bool)
    for rank, di in enumerate(order):
        det = dets[di]
        best_gi, best_ov = -1, 0.0
        for gi in gts_by_image.get(det.image_id, ()):
            if matched[gi]:
                continue
            ov = iou(det.bbox, gts[gi].bbox)
            # ties keep the earliest ground truth in input order
            if ov >= iou_thresh and ov > best_ov:
                best_gi, best_ov = gi, ov
        if best_gi >= 0:
            matched[best_gi] = True
            tp[rank] = True
    return tp


def average_precision(
    dets: list[Detection], gts: list[GroundTruth], iou_thresh: float
) -> float | None:
    """101-point interpolated AP for a single class at one IoU threshold.

    Returns None when there are no ground truths (AP undefined; such
    classes are excluded from the mean).
    """
    if not gts:
        return None
    if not dets:
        return 0.0
    tp = _match_greedy(dets, gts, iou_thresh)
    tp_cum = np.cumsum(tp)
    n_det = np.arange(1, len(dets) + 1)
    precision = tp_cum / n_det
    recall = tp_cum / len(gts)
    # precision envelope: best precision achievable at recall >= r
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    for r in RECALL_GRID:
        idx = np.searchsorted(recall, r, side="left")
        if idx < len(envelope):
            ap += envelope[idx]
    return ap / len(RECALL_GRID)


def map_coco(
    dets: list[Detection], gts: list[GroundTruth]
) -> tuple[float, dict[int, dict[float, float]]]:
    """Mean AP over IoU thresholds 0.50:0.05:0.95 and annotated classes.

    Returns (mAP, per-class per-threshold AP table).
    """
    classes = sorted({gt.category_id for gt in gts})
    if not classes:
        raise ValueError("no ground truths; mAP undefined")
    dets_by_class: dict[int, list[Detection]] = defaultdict(list)
    for det in dets:
        dets_by_class[det.category_id].append(det)
    gts_by_class: dict[int, list[GroundTruth]] = defaultdict(list)
    for gt in gts:
        gts_by_class[gt.category_id].append(gt)

    table: dict[int, dict[float, float]] = {}
    for cls in classes:
        table[cls] = {}
        for thresh in IOU_THRESHOLDS:
            ap = average_precision(dets_by_class.get(cls, []), gts_by_class[cls], thresh)
            table[cls][thresh] = ap
    values = [table[c][t] for c in classes for t in IOU_THRESHOLDS]
    return float(np.mean(values)), table


def counting_metrics(pairs: list[tuple[int, int]]) -> tuple[float, float]:
    """MAE and sMAPE (in percent) over per-image (true, predicted) counts.

    sMAPE normalizes each error by the mean of the two counts, with the
    0/0 convention that a correct empty image contributes 0.
    """
    if not pairs:
        raise ValueError("counting metrics need at least one image")
    errs = []
    sym = []
    for t, p in pairs:
        err = abs(p - t)
        errs.append(err)
        sym.append(0.0 if t == p == 0 else err / ((p + t) / 2.0))
    return float(np.mean(errs)), float(100.0 * np.mean(sym))


def count_from_detections(
    dets: list[Detection], score_thresh: float, category_id: int | None = None
) -> int:
    """Number of detections at or above the score threshold."""
    if not 0.0 <= score_thresh <= 1.0:
        raise ValueError("score_thresh must be in [0, 1]")
    return sum(
        1
        for d in dets
        if d.score >= score_thresh and (category_id is None or d.category_id == category_id)
    )


def counting_report(pairs: list[tuple[int, int, int]]) -> str:
    """CSV of per-image (true, predicted) counts plus an MAE/sMAPE summary."""
    if not pairs:
        raise ValueError("empty counting report")
    mae, smape = counting_metrics([(t, p) for _, t, p in pairs])
    buf = io.StringIO()
    buf.write("image_id,true_count,predicted_count\n")
    for image_id, t, p in pairs:
        buf.write(f"{image_id},{t},{p}\n")
    buf.write(f"summary,MAE={mae:.6f},sMAPE={smape:.6f}%\n")
    return buf.getvalue()
