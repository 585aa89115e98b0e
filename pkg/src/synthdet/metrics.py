"""Box mAP at a fixed IoU threshold with all-point interpolation."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class Detection:
    image_id: int
    class_id: int
    bbox: tuple  # x, y, w, h in pixels
    score: float = 1.0


@dataclass
class EvalResult:
    per_class: dict  # class id -> AP
    mAP: float
    iou_threshold: float = 0.5


def iou(a, b) -> float:
    """IoU of two [x, y, w, h] boxes (continuous coordinates)."""
    ax, ay, aw, ah = (float(v) for v in a)
    bx, by, bw, bh = (float(v) for v in b)
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


def score_order(scores) -> list:
    """Descending score; ties keep the lower input index first."""
    return sorted(range(len(scores)), key=lambda k: (-float(scores[k]), k))


def match_detections(dets, gts, threshold=0.5) -> list:
    """TP/FP flag per detection (in input order) for one image and class.

    Detections are visited by descending score; each claims the unmatched
    ground truth of highest IoU that reaches ``threshold``.
    """
    flags = [False] * len(dets)
    taken = [False] * len(gts)
    for k in score_order([d.score for d in dets]):
        best, best_iou = -1, threshold
        for g, gt in enumerate(gts):
            if taken[g]:
                continue
            v = iou(dets[k].bbox, gt)
            if v >= best_iou and (best < 0 or v > best_iou):
                best, best_iou = g, v
        if best >= 0:
            taken[best] = True
            flags[k] = True
    return flags


def average_precision(labels, scores, gt_count) -> float:
    """Area under the precision envelope of the score-ranked TP/FP sequence."""
    if gt_count < 1:
        raise EvalError("average precision needs at least one ground-truth box")
    if len(labels) == 0:
        return 0.0
    order = score_order(scores)
    tp = np.array([1.0 if labels[k] else 0.0 for k in order])
    ctp = np.cumsum(tp)
    cfp = np.cumsum(1.0 - tp)
    recall = ctp / gt_count
    precision = ctp / (ctp + cfp)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    step = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[step + 1] - mrec[step]) * mpre[step + 1]))


def _gt_boxes(gt_doc):
    out = {}
    for a in gt_doc.get("annotations", []):
        out.setdefault((int(a["image_id"]), int(a["category_id"])), []).append(tuple(a["bbox"]))
    return out


def _detections(pred):
    items = pred["annotations"] if isinstance(pred, dict) else pred
    return [Detection(int(p["image_id"]), int(p["category_id"]), tuple(p["bbox"]), float(p.get("score", 1.0)))
            for p in items]


def evaluate(pred, gt_doc, threshold=0.5) -> EvalResult:
    """Per-class AP pooled over all images; mAP over classes that have ground truth."""
    dets = _detections(pred)
    gts = _gt_boxes(gt_doc)
    known = {int(c["id"]) for c in gt_doc.get("categories", [])}
    images = {int(im["id"]) for im in gt_doc.get("images", [])}
    for d in dets:
        if known and d.class_id not in known:
            raise EvalError(f"unknown class id {d.class_id} in predictions")
        if d.image_id not in images:
            raise EvalError(f"prediction for image {d.image_id} which is not in the ground truth")
    if not np.isfinite([d.score for d in dets]).all():
        raise EvalError("non-finite detection score")

    by_group = {}
    for d in dets:
        by_group.setdefault((d.image_id, d.class_id), []).append(d)
    per_class = {}
    classes = sorted({c for (_, c) in gts})
    for c in classes:
        labels, scores, n_gt = [], [], 0
        for (img, cc), boxes in sorted(gts.items()):
            if cc == c:
                n_gt += len(boxes)
        for (img, cc), group in sorted(by_group.items()):
            if cc != c:
                continue
            labels += match_detections(group, gts.get((img, c), []), threshold)
            scores += [d.score for d in group]
        per_class[c] = average_precision(labels, scores, n_gt)
    m = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return EvalResult(per_class, m, threshold)


def load_json(path):
    return json.loads(Path(path).read_text())
