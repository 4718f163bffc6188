"""
Segment IoU and panoptic quality.

Panoptic quality follows the usual intersection-counting scheme: every
pixel is labelled with a (gt segment, pred segment) pair, the pair areas
give all intersections at once, and a gt/pred pair of the same class
matches when its IoU exceeds 0.5.  Such a match is unique, so a second
match for one segment means the counting is broken.

Stuff targets of the same class are merged into one segment per side
before matching.  There is no void label.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from otmask.core.errors import InvariantError, ShapeError, ValidationError
from otmask.core.models import STUFF, THING, PseudoMask


@dataclass
class ClassScore:
    """Per-class panoptic counts and qualities."""

    kind: str
    tp: int = 0
    fp: int = 0
    fn: int = 0
    iou_sum: float = 0.0

    @property
    def sq(self) -> float:
        return self.iou_sum / self.tp if self.tp else 0.0

    @property
    def rq(self) -> float:
        denom = self.tp + 0.5 * self.fp + 0.5 * self.fn
        return self.tp / denom if denom else 0.0

    @property
    def pq(self) -> float:
        return self.sq * self.rq

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "pq": self.pq,
            "sq": self.sq,
            "rq": self.rq,
        }


@dataclass
class PanopticScore:
    """Aggregate and per-class panoptic quality.

    ``pq``/``sq``/``rq`` are means over the classes present in gt or pred;
    ``pq_thing``/``pq_stuff`` are None when no class of that kind occurs.
    """

    pq: float
    sq: float
    rq: float
    pq_thing: Optional[float]
    pq_stuff: Optional[float]
    per_class: Dict[int, ClassScore] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "pq": self.pq,
            "sq": self.sq,
            "rq": self.rq,
            "pq_thing": self.pq_thing,
            "pq_stuff": self.pq_stuff,
            "per_class": {str(c): s.to_dict() for c, s in sorted(self.per_class.items())},
        }


def segment_iou(a: np.ndarray, b: np.ndarray) -> float:
    """``|a & b| / |a | b|`` of two boolean pixel sets.

    Raises:
        ShapeError:      Sets over different grids.
        ValidationError: Both sets empty.
    """
    if a.shape != b.shape:
        raise ShapeError(f"pixel sets differ in shape: {a.shape} vs {b.shape}")
    a, b = a.astype(bool), b.astype(bool)
    union = int(np.count_nonzero(a | b))
    if union == 0:
        raise ValidationError("IoU of two empty pixel sets is undefined")
    return np.count_nonzero(a & b) / union


def _segments(mask: PseudoMask) -> Tuple[np.ndarray, List[Tuple[int, str]]]:
    """Segment index per pixel and ``(class, kind)`` per segment."""
    keys: Dict[Tuple, int] = {}
    info: List[Tuple[int, str]] = []
    ids = np.unique(mask.targets)
    remap = np.zeros(int(ids.max()) + 1, dtype=np.int64)
    for tid in ids.tolist():
        if tid not in mask.lookup:
            raise ValidationError(f"target id {tid} has no class in the mask lookup")
        cls, kind = mask.lookup[tid]
        key = (STUFF, cls) if kind == STUFF else (THING, tid)
        if key not in keys:
            keys[key] = len(info)
            info.append((cls, kind))
        remap[tid] = keys[key]
    return remap[mask.targets], info


def panoptic_quality(pred: PseudoMask, gt: PseudoMask) -> PanopticScore:
    """PQ, SQ and RQ of *pred* against *gt*.

    Raises:
        ShapeError:     Masks over different grids.
        InvariantError: A segment matched twice.
    """
    if pred.shape != gt.shape:
        raise ShapeError(f"pred mask is {pred.shape}, gt mask is {gt.shape}")
    gt_seg, gt_info = _segments(gt)
    pred_seg, pred_info = _segments(pred)
    gt_area = np.bincount(gt_seg.reshape(-1), minlength=len(gt_info))
    pred_area = np.bincount(pred_seg.reshape(-1), minlength=len(pred_info))

    offset = len(pred_info)
    pairs, inter = np.unique(gt_seg.reshape(-1) * offset + pred_seg.reshape(-1), return_counts=True)

    classes: Dict[int, ClassScore] = {}
    for cls, kind in gt_info + pred_info:
        classes.setdefault(cls, ClassScore(kind))

    gt_matched: Dict[int, int] = {}
    pred_matched: Dict[int, int] = {}
    for pair, area in zip(pairs.tolist(), inter.tolist()):
        g, p = divmod(pair, offset)
        if gt_info[g][0] != pred_info[p][0]:
            continue
        iou = area / (gt_area[g] + pred_area[p] - area)
        if iou <= 0.5:
            continue
        if g in gt_matched or p in pred_matched:
            raise InvariantError(f"gt segment {g} / pred segment {p} matched twice")
        gt_matched[g] = p
        pred_matched[p] = g
        score = classes[gt_info[g][0]]
        score.tp += 1
        score.iou_sum += iou

    for g, (cls, _) in enumerate(gt_info):
        if g not in gt_matched:
            classes[cls].fn += 1
    for p, (cls, _) in enumerate(pred_info):
        if p not in pred_matched:
            classes[cls].fp += 1

    scores = list(classes.values())
    things = [s.pq for s in scores if s.kind == THING]
    stuffs = [s.pq for s in scores if s.kind == STUFF]
    return PanopticScore(
        pq=float(np.mean([s.pq for s in scores])),
        sq=float(np.mean([s.sq for s in scores])),
        rq=float(np.mean([s.rq for s in scores])),
        pq_thing=float(np.mean(things)) if things else None,
        pq_stuff=float(np.mean(stuffs)) if stuffs else None,
        per_class=classes,
    )


def mask_miou(pred: PseudoMask, gt: PseudoMask) -> float:
    """Mean IoU over the gt target ids between the pixels carrying each id."""
    if pred.shape != gt.shape:
        raise ShapeError(f"pred mask is {pred.shape}, gt mask is {gt.shape}")
    ids = np.unique(gt.targets).tolist()
    return float(np.mean([segment_iou(pred.targets == t, gt.targets == t) for t in ids]))
