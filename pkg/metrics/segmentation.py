"""
Segmentation Metrics

One-vs-rest confusion counts and the overlap scores derived from them
(DSC, IoU, precision/PPV, recall/TPR, F1).
"""

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

EMPTY_UNION = 'empty_union'
PPV_UNDEFINED = 'ppv_undefined'
TPR_UNDEFINED = 'tpr_undefined'


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError(f"Confusion counts must be non-negative: {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class SegScores:
    dsc: float
    iou: float
    ppv: float
    tpr: float
    f1: float
    flags: Tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> Dict:
        return {'dsc': self.dsc, 'iou': self.iou, 'ppv': self.ppv,
                'tpr': self.tpr, 'f1': self.f1, 'flags': list(self.flags)}


def confusion(pred: np.ndarray, gt: np.ndarray, cls: int) -> ConfusionCounts:
    """
    Pixel counts of class `cls` against the rest.

    Raises:
        ValueError: shapes differ
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"Prediction shape {pred.shape} differs from ground truth {gt.shape}")
    p = pred == cls
    g = gt == cls
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp, fp, fn, int(p.size) - tp - fp - fn)


def seg_scores(c: ConfusionCounts) -> SegScores:
    """
    Overlap scores from confusion counts.

    An empty union (tp = fp = fn = 0) scores 1.0 everywhere and is flagged.
    A zero precision or recall denominator scores that term 0.0 and is flagged.
    """
    if c.tp + c.fp + c.fn == 0:
        return SegScores(1.0, 1.0, 1.0, 1.0, 1.0, (EMPTY_UNION,))

    flags = []
    dsc = 2.0 * c.tp / (2.0 * c.tp + c.fp + c.fn)
    iou = c.tp / (c.tp + c.fp + c.fn)
    if c.tp + c.fp == 0:
        ppv = 0.0
        flags.append(PPV_UNDEFINED)
    else:
        ppv = c.tp / (c.tp + c.fp)
    if c.tp + c.fn == 0:
        tpr = 0.0
        flags.append(TPR_UNDEFINED)
    else:
        tpr = c.tp / (c.tp + c.fn)
    f1 = 0.0 if ppv + tpr == 0 else 2.0 * ppv * tpr / (ppv + tpr)
    return SegScores(dsc, iou, ppv, tpr, f1, tuple(flags))
