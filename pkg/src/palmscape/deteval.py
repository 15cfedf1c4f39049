"""Detection evaluation: IoU box matching and precision/recall curves.

Matching follows the usual detection-benchmark convention: predictions are
taken in descending confidence, each may claim the unmatched label with
the highest IoU at or above the threshold, and every label is matched at
most once. IoU is computed on axis-aligned bounding boxes of the polygons
in local metres.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geo
from .errors import DegenerateHull
from .geo import GeoPoint, GeoPolygon


@dataclass(frozen=True)
class MatchConfig:
    iou_threshold: float = 0.5
    confidence_thresholds: tuple = (0.2, 0.3, 0.4)

    def __post_init__(self):
        if not 0.0 < self.iou_threshold <= 1.0:
            raise ValueError("iou_threshold must be in (0, 1]")
        for t in self.confidence_thresholds:
            if not 0.0 < t <= 1.0:
                raise ValueError("confidence thresholds must be in (0, 1]")


@dataclass(frozen=True)
class PrCurvePoint:
    threshold: float
    true_positives: int
    false_positives: int
    false_negatives: int
    precision: float
    recall: float
    zero_prediction_warning: bool = False


def _bbox_local(poly: GeoPolygon, origin: GeoPoint) -> tuple[float, float, float, float]:
    ring = poly.exterior_lonlat()[:-1]
    xs, ys = geo.project_lonlat(ring[:, 0], ring[:, 1], origin)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 <= x0 or y1 <= y0:
        raise DegenerateHull("polygon has a zero-extent bounding box")
    return x0, y0, x1, y1


def _box_iou(a, b) -> float:
    ix0 = max(a[0], b[0])
    iy0 = max(a[1], b[1])
    ix1 = min(a[2], b[2])
    iy1 = min(a[3], b[3])
    iw = max(0.0, ix1 - ix0)
    ih = max(0.0, iy1 - iy0)
    inter = iw * ih
    if inter == 0.0:
        return 0.0
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    return inter / (area_a + area_b - inter)


def iou(a: GeoPolygon, b: GeoPolygon) -> float:
    """Axis-aligned bounding-box IoU of two polygons, in [0, 1]."""
    origin = a.anchor()
    return _box_iou(_bbox_local(a, origin), _bbox_local(b, origin))


def match_and_score(preds, labels, cfg: MatchConfig | None = None) -> list[PrCurvePoint]:
    """Greedy confidence-ordered matching at each confidence threshold.

    ``preds`` are PalmDetection records with polygon footprints; ``labels``
    are ground-truth polygons. Precision at zero kept predictions is
    defined as 1 and flagged. Ties in confidence break on feature id, ties
    in IoU on lower label index.
    """
    cfg = cfg or MatchConfig()
    labels = list(labels)
    preds = list(preds)
    for p in preds:
        if p.footprint is None:
            raise ValueError(f"prediction {p.id} has no polygon footprint")

    if labels:
        origin = labels[0].anchor()
    elif preds:
        origin = preds[0].footprint.anchor()
    else:
        origin = GeoPoint(0.0, 0.0)
    label_boxes = [_bbox_local(l, origin) for l in labels]
    pred_boxes = [_bbox_local(p.footprint, origin) for p in preds]
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].confidence, preds[i].id))

    points = []
    for threshold in cfg.confidence_thresholds:
        kept = [i for i in order if preds[i].confidence >= threshold]
        matched = np.zeros(len(labels), dtype=bool)
        tp = 0
        for i in kept:
            best_iou = 0.0
            best_j = -1
            # ascending j makes the lowest label index win IoU ties
            for j, lbox in enumerate(label_boxes):
                if matched[j]:
                    continue
                v = _box_iou(pred_boxes[i], lbox)
                if v > best_iou:
                    best_iou = v
                    best_j = j
            if best_j != -1 and best_iou >= cfg.iou_threshold:
                matched[best_j] = True
                tp += 1
        fp = len(kept) - tp
        fn = len(labels) - tp
        if kept:
            precision = tp / (tp + fp)
            warn = False
        else:
            precision = 1.0  # 0/0 convention, flagged
            warn = True
        recall = tp / (tp + fn) if (tp + fn) > 0 else 1.0
        points.append(
            PrCurvePoint(
                threshold=threshold,
                true_positives=tp,
                false_positives=fp,
                false_negatives=fn,
                precision=precision,
                recall=recall,
                zero_prediction_warning=warn,
            )
        )
    return points
