"""Class-agnostic average precision over mask IoU thresholds 0.50:0.05:0.95.

Matching is greedy in score order (highest-IoU unmatched ground truth wins)
and AP uses 101-point recall interpolation, the established protocol for
class-agnostic mask benchmarks.  No detections-per-image cap is imposed.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import worker_count
from .masks import BinaryMask, ScoredMask, iou

DEFAULT_THRESHOLDS = tuple(np.round(np.arange(0.50, 0.96, 0.05), 2))


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class ImageMasks:
    image_id: str
    height: int
    width: int
    masks: tuple[ScoredMask, ...]


@dataclass(frozen=True)
class EvalResult:
    ap: float
    ap50: float
    ap75: float
    per_threshold: tuple[tuple[float, float], ...]

    def to_dict(self) -> dict:
        return {"ap": self.ap, "ap50": self.ap50, "ap75": self.ap75,
                "per_threshold": [list(t) for t in self.per_threshold]}


def match(preds: Sequence[ScoredMask], gts: Sequence[ScoredMask],
          iou_threshold: float,
          iou_table: Optional[np.ndarray] = None) -> list[tuple[int, Optional[int]]]:
    """Greedy matching: predictions in score order each claim the unmatched
    ground truth of highest IoU >= threshold (ties to the lower gt index)."""
    if iou_table is None:
        iou_table = pairwise_iou(preds, gts)
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    taken = [False] * len(gts)
    result: list[tuple[int, Optional[int]]] = []
    for pi in order:
        best_gt, best_iou = None, -1.0
        for gi in range(len(gts)):
            if taken[gi]:
                continue
            v = iou_table[pi, gi]
            # strict > keeps the lowest gt index on ties
            if v >= iou_threshold and v > best_iou:
                best_gt, best_iou = gi, v
        if best_gt is not None:
            taken[best_gt] = True
        result.append((pi, best_gt))
    return result


def pairwise_iou(preds: Sequence[ScoredMask], gts: Sequence[ScoredMask]) -> np.ndarray:
    table = np.zeros((len(preds), len(gts)))
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            table[i, j] = iou(p.mask, g.mask)
    return table


def average_precision(preds: Sequence[ImageMasks], gts: Sequence[ImageMasks],
                      thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> EvalResult:
    """Pool score-ranked predictions across images and integrate the
    101-point interpolated precision-recall curve per threshold."""
    gt_by_image = {g.image_id: g for g in gts}
    missing = [p.image_id for p in preds if p.image_id not in gt_by_image]
    if missing:
        raise EvalError(f"predictions for unknown images: {missing[:3]}")
    total_gt = sum(len(g.masks) for g in gts)
    if total_gt == 0:
        raise EvalError("no ground-truth masks anywhere; AP undefined")

    # per-image IoU tables are independent; order of results is fixed
    pairs = [(p, gt_by_image[p.image_id]) for p in preds]
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        tables = list(pool.map(
            lambda pg: pairwise_iou(pg[0].masks, pg[1].masks), pairs))

    per_threshold = []
    for t in thresholds:
        scores: list[float] = []
        tp_flags: list[bool] = []
        for (p, g), table in zip(pairs, tables):
            matches = dict(match(p.masks, g.masks, t, table))
            for pi, sm in enumerate(p.masks):
                scores.append(sm.score)
                tp_flags.append(matches.get(pi) is not None)
        ap_t = _interpolated_ap(np.array(scores), np.array(tp_flags, dtype=bool),
                                total_gt)
        per_threshold.append((float(t), ap_t))

    ap = float(np.mean([v for _, v in per_threshold]))
    lookup = dict(per_threshold)
    return EvalResult(ap=ap, ap50=lookup.get(0.5, ap), ap75=lookup.get(0.75, ap),
                      per_threshold=tuple(per_threshold))


def _interpolated_ap(scores: np.ndarray, tp: np.ndarray, total_gt: int) -> float:
    if scores.size == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    tp = tp[order]
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(~tp)
    recall = cum_tp / total_gt
    precision = cum_tp / (cum_tp + cum_fp)
    # monotone envelope from the right, then sample 101 recall points
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    recall_grid = np.linspace(0.0, 1.0, 101)
    idx = np.searchsorted(recall, recall_grid, side="left")
    sampled = np.zeros(recall_grid.size)
    valid = idx < precision.size
    sampled[valid] = precision[idx[valid]]
    return float(sampled.mean())


# -- ndjson files ---------------------------------------------------------

def image_to_record(im: ImageMasks, with_scores: bool) -> dict:
    masks = []
    for sm in im.masks:
        rec = {"rle": sm.mask.to_rle()}
        if with_scores:
            rec["score"] = sm.score
        masks.append(rec)
    return {"image_id": im.image_id, "height": im.height, "width": im.width,
            "masks": masks}


def record_to_image(rec: dict) -> ImageMasks:
    masks = tuple(
        ScoredMask(BinaryMask.from_rle(m["rle"]), float(m.get("score", 1.0)))
        for m in rec["masks"])
    return ImageMasks(str(rec["image_id"]), int(rec["height"]), int(rec["width"]),
                      masks)


def write_ndjson(path, images: Sequence[ImageMasks], with_scores: bool) -> None:
    with open(path, "w") as f:
        for im in images:
            f.write(json.dumps(image_to_record(im, with_scores)) + "\n")


def read_ndjson(path) -> list[ImageMasks]:
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(record_to_image(json.loads(line)))
    return out
