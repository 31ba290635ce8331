"""Box IoU and all-point interpolated average precision."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputDomainError

REPORTED_IOUS = (0.5, 0.75)


def _coords(box) -> tuple[float, float, float, float]:
    b = getattr(box, "bbox", box)
    x0, y0, x1, y1 = (float(v) for v in b)
    if not (x0 < x1 and y0 < y1):
        raise InputDomainError(f"degenerate box {b}")
    return x0, y0, x1, y1


def iou(a, b) -> float:
    """Intersection over union of two boxes; 0 for disjoint boxes."""
    ax0, ay0, ax1, ay1 = _coords(a)
    bx0, by0, bx1, by1 = _coords(b)
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


@dataclass
class EvalResult:
    ap: float
    iou_threshold: float
    per_iou: dict[float, float]
    pr_curve: list[tuple[float, float]]
    counts: list[dict]
    per_view: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        r6 = lambda v: round(float(v), 6)  # noqa: E731
        return {
            "ap": r6(self.ap),
            "iou_threshold": self.iou_threshold,
            "per_iou": {f"{k:g}": r6(v) for k, v in self.per_iou.items()},
            "per_view": {k: r6(v) for k, v in self.per_view.items()},
            "pr_curve": [[r6(p), r6(r)] for p, r in self.pr_curve],
            "counts": [{**c, "score": r6(c["score"])} for c in self.counts],
        }


def _pred_items(preds):
    items = []
    for img, lst in enumerate(preds):
        for p in lst:
            if hasattr(p, "score"):
                box, score = _coords(p), float(p.score)
            else:
                box, score = _coords(p[0]), float(p[1])
            items.append((-score, img, box))
    items.sort()
    return items


def _sweep(preds, gts, thr: float):
    """Ranked TP flags after greedy matching, plus the GT count."""
    gt_boxes = [[_coords(g) for g in lst] for lst in gts]
    used = [np.zeros(len(g), dtype=bool) for g in gt_boxes]
    flags, scores = [], []
    for neg_score, img, box in _pred_items(preds):
        best_j, best = -1, -1.0
        for j, g in enumerate(gt_boxes[img]):
            if used[img][j]:
                continue
            o = iou(box, g)
            if o >= thr and o > best:
                best_j, best = j, o
        if best_j >= 0:
            used[img][best_j] = True
        flags.append(best_j >= 0)
        scores.append(-neg_score)
    return np.array(flags, dtype=bool), np.array(scores), sum(len(g) for g in gt_boxes)


def _ap_from_flags(flags: np.ndarray, total: int):
    if total == 0 or len(flags) == 0:
        return 0.0, np.zeros(0), np.zeros(0)
    tp = np.cumsum(flags)
    precision = tp / np.arange(1, len(flags) + 1)
    recall = tp / total
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    steps = np.diff(np.concatenate([[0.0], recall]))
    ap = 0.0
    for s, e in zip(steps, envelope):
        ap += s * e
    return float(ap), precision, recall


def average_precision(preds, gts, iou_threshold: float = 0.5) -> EvalResult:
    """AP over images pooled into one ranking.

    ``preds`` holds one list per image of scored boxes (``ScoredBox`` or
    ``(bbox, score)``); ``gts`` one list of boxes per image.
    """
    if len(preds) != len(gts):
        raise InputDomainError(f"{len(preds)} prediction lists for {len(gts)} ground-truth lists")
    if not 0.0 < iou_threshold <= 1.0:
        raise InputDomainError("iou_threshold must lie in (0, 1]")
    flags, scores, total = _sweep(preds, gts, iou_threshold)
    ap, precision, recall = _ap_from_flags(flags, total)
    counts = []
    tp = 0
    for i, (f, s) in enumerate(zip(flags, scores)):
        tp += int(f)
        counts.append({"score": float(s), "tp": tp, "fp": i + 1 - tp, "fn": total - tp})
    per_iou = {}
    for t in REPORTED_IOUS:
        per_iou[t] = ap if t == iou_threshold else _ap_from_flags(*_sweep(preds, gts, t)[::2])[0]
    return EvalResult(ap, iou_threshold, per_iou, list(zip(precision.tolist(), recall.tolist())), counts)


def evaluate_pairs(pred_pairs, gt_pairs, iou_threshold: float = 0.5) -> EvalResult:
    """AP for image pairs: both views of every pair pooled, plus per-view AP."""
    if len(pred_pairs) != len(gt_pairs):
        raise InputDomainError(f"{len(pred_pairs)} predicted pairs for {len(gt_pairs)} ground-truth pairs")
    preds = [v for pair in pred_pairs for v in pair]
    gts = [v for pair in gt_pairs for v in pair]
    res = average_precision(preds, gts, iou_threshold)
    res.per_view = {
        f"image{k + 1}": average_precision(preds[k::2], gts[k::2], iou_threshold).ap for k in range(2)
    }
    return res
