"""CLEAR MOT accuracy and critical-TTC confusion metrics."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .trajectory_io import Detection

Box = tuple[float, float, float, float]  # left, top, width, height


class UndefinedMetricError(ValueError):
    pass


class AlignmentError(ValueError):
    def __init__(self, missing_in_pred, missing_in_gt):
        self.missing_in_pred = sorted(missing_in_pred)
        self.missing_in_gt = sorted(missing_in_gt)
        super().__init__(
            f"label sets differ: {len(self.missing_in_pred)} keys missing from predictions "
            f"{self.missing_in_pred[:5]}, {len(self.missing_in_gt)} missing from ground truth "
            f"{self.missing_in_gt[:5]}"
        )


def iou(a: Box, b: Box) -> float:
    ax2, ay2 = a[0] + a[2], a[1] + a[3]
    bx2, by2 = b[0] + b[2], b[1] + b[3]
    iw = min(ax2, bx2) - max(a[0], b[0])
    ih = min(ay2, by2) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a[2] * a[3] + b[2] * b[3] - inter)


@dataclass
class FrameMatch:
    matches: dict[int, int] = field(default_factory=dict)  # gt id -> hyp id
    misses: list[int] = field(default_factory=list)
    false_positives: list[int] = field(default_factory=list)
    id_switches: list[int] = field(default_factory=list)  # gt ids


def match_detections(
    gt: Mapping[int, Box],
    hyp: Mapping[int, Box],
    prior: Mapping[int, int],
    iou_threshold: float = 0.5,
) -> FrameMatch:
    """Match one frame.

    ``prior`` maps each gt id to the hyp id it was last matched to (in any
    earlier frame). Correspondences from ``prior`` whose boxes still overlap
    by at least ``iou_threshold`` are kept; the rest are assigned to maximize
    total IoU. A gt matched to a hyp id other than its prior one counts as an
    id switch.
    """
    out = FrameMatch()
    used_hyp: set[int] = set()
    for g, h in sorted(prior.items()):
        if g in gt and h in hyp and h not in used_hyp and iou(gt[g], hyp[h]) >= iou_threshold:
            out.matches[g] = h
            used_hyp.add(h)

    free_gt = sorted(g for g in gt if g not in out.matches)
    free_hyp = sorted(h for h in hyp if h not in used_hyp)
    if free_gt and free_hyp:
        scores = np.array([[iou(gt[g], hyp[h]) for h in free_hyp] for g in free_gt])
        allowed = scores >= iou_threshold
        # disallowed pairs add nothing; they are dropped after assignment
        cost = np.where(allowed, -scores, 0.0)
        rows, cols = linear_sum_assignment(cost)
        for r, c in zip(rows, cols):
            if allowed[r, c]:
                g, h = free_gt[r], free_hyp[c]
                out.matches[g] = h
                used_hyp.add(h)
                if g in prior and prior[g] != h:
                    out.id_switches.append(g)

    out.misses = sorted(g for g in gt if g not in out.matches)
    out.false_positives = sorted(h for h in hyp if h not in used_hyp)
    return out


@dataclass(frozen=True)
class MotaResult:
    misses: int
    false_positives: int
    id_switches: int
    gt_count: int

    @property
    def mota(self) -> float:
        return 1.0 - (self.misses + self.false_positives + self.id_switches) / self.gt_count

    def to_dict(self) -> dict:
        return {
            "misses": self.misses,
            "false_positives": self.false_positives,
            "id_switches": self.id_switches,
            "gt_count": self.gt_count,
            "mota": self.mota,
        }


def _frames(dets: Sequence[Detection]) -> dict[int, dict[int, Box]]:
    out: dict[int, dict[int, Box]] = defaultdict(dict)
    for d in dets:
        out[d.frame][d.id] = d.box
    return out


def compute_mota(gt: Sequence[Detection], hyp: Sequence[Detection], iou_threshold: float = 0.5) -> MotaResult:
    gt_frames, hyp_frames = _frames(gt), _frames(hyp)
    prior: dict[int, int] = {}
    fn = fp = idsw = n_gt = 0
    for frame in sorted(set(gt_frames) | set(hyp_frames)):
        g, h = gt_frames.get(frame, {}), hyp_frames.get(frame, {})
        m = match_detections(g, h, prior, iou_threshold)
        fn += len(m.misses)
        fp += len(m.false_positives)
        idsw += len(m.id_switches)
        n_gt += len(g)
        prior.update(m.matches)
    if n_gt == 0:
        raise UndefinedMetricError("MOTA is undefined without ground-truth objects")
    return MotaResult(fn, fp, idsw, n_gt)


def _ratio(num: int, den: int) -> float:
    return num / den if den else math.nan


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return _ratio(self.tp + self.tn, self.total)

    @property
    def tpr(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def fpr(self) -> float:
        return _ratio(self.fp, self.fp + self.tn)

    @property
    def fnr(self) -> float:
        return _ratio(self.fn, self.tp + self.fn)

    def to_dict(self) -> dict:
        def clean(v):
            return None if math.isnan(v) else v
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "accuracy": clean(self.accuracy),
            "true_positive_rate": clean(self.tpr),
            "false_positive_rate": clean(self.fpr),
            "false_negative_rate": clean(self.fnr),
        }


def risk_confusion(gt: Mapping, pred: Mapping, missing_as_safe: bool = False) -> ConfusionCounts:
    """Confusion counts with critical as the positive class.

    Keys are typically (frame, id_a, id_b). Unless ``missing_as_safe`` is set,
    the two mappings must share exactly the same keys.
    """
    gt_keys, pred_keys = set(gt), set(pred)
    if gt_keys != pred_keys and not missing_as_safe:
        raise AlignmentError(gt_keys - pred_keys, pred_keys - gt_keys)
    tp = fp = tn = fn = 0
    for key in gt_keys | pred_keys:
        truth, guess = bool(gt.get(key, False)), bool(pred.get(key, False))
        if truth and guess:
            tp += 1
        elif guess:
            fp += 1
        elif truth:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, tn, fn)
