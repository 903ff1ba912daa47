"""Detection and recognition metrics: per-class precision/recall/F1 at an IoU
threshold, top-k error rate, and fragment accuracy."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .geometry import Region, RegionLabel, iou


@dataclass(frozen=True)
class EvalConfig:
    iou_threshold: float = 0.85

    def __post_init__(self):
        if not (0.0 < self.iou_threshold <= 1.0):
            raise ValueError(f"IoU threshold must lie in (0, 1], got {self.iou_threshold}")


@dataclass(frozen=True)
class ClassCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if self.tp < 0 or self.fp < 0 or self.fn < 0:
            raise ValueError("counts must be non-negative")

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp > 0 else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn > 0 else 0.0

    @property
    def f_measure(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def __add__(self, other: "ClassCounts") -> "ClassCounts":
        return ClassCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class DetectionReport:
    per_class: dict[RegionLabel, ClassCounts] = field(default_factory=dict)

    def counts(self, label: RegionLabel) -> ClassCounts:
        return self.per_class.get(label, ClassCounts())

    @property
    def micro(self) -> ClassCounts:
        total = ClassCounts()
        for c in self.per_class.values():
            total = total + c
        return total

    def to_dict(self) -> dict:
        def entry(c: ClassCounts) -> dict:
            return {
                "tp": c.tp,
                "fp": c.fp,
                "fn": c.fn,
                "precision": c.precision,
                "recall": c.recall,
                "f1": c.f_measure,
            }

        return {
            "classes": {
                label.value: entry(self.per_class[label])
                for label in sorted(self.per_class, key=lambda l: l.value)
            },
            "micro": entry(self.micro),
        }


def merge_reports(reports: Sequence[DetectionReport]) -> DetectionReport:
    """Reports merge by summing counts, so per-document evaluation can run in
    parallel and fold."""
    merged: dict[RegionLabel, ClassCounts] = {}
    for report in reports:
        for label, counts in report.per_class.items():
            merged[label] = merged.get(label, ClassCounts()) + counts
    return DetectionReport(per_class=merged)


def match_detections(
    pred: list[Region], truth: list[Region], cfg: EvalConfig = EvalConfig()
) -> DetectionReport:
    """Greedy one-to-one matching per class, predictions taken in descending
    score order. A prediction is a true positive when its best still-unmatched
    same-class truth reaches the IoU threshold; leftover predictions are false
    positives and leftover truths false negatives. Ties on score are broken by
    higher best-IoU so results do not depend on input order."""
    labels = {r.label for r in pred} | {r.label for r in truth}
    per_class: dict[RegionLabel, ClassCounts] = {}
    for label in labels:
        p = [r for r in pred if r.label is label]
        t = [r for r in truth if r.label is label]
        # deterministic order: score desc, then best-IoU desc, then geometry
        p.sort(
            key=lambda r: (
                -r.score,
                -max((iou(r.bbox, g.bbox) for g in t), default=0.0),
                r.bbox.xmin,
                r.bbox.ymin,
            )
        )
        matched = [False] * len(t)
        tp = 0
        fp = 0
        for r in p:
            best_iou = 0.0
            best_j = -1
            for j, g in enumerate(t):
                if matched[j]:
                    continue
                v = iou(r.bbox, g.bbox)
                if v > best_iou:
                    best_iou = v
                    best_j = j
            if best_j >= 0 and best_iou >= cfg.iou_threshold:
                matched[best_j] = True
                tp += 1
            else:
                fp += 1
        fn = matched.count(False)
        per_class[label] = ClassCounts(tp=tp, fp=fp, fn=fn)
    return DetectionReport(per_class=per_class)


def topk_error(predictions: Sequence[Sequence[int]], truths: Sequence[int], k: int) -> float:
    """Fraction of samples whose true label is absent from the k top-ranked
    candidates. predictions[i] is a ranked candidate list for sample i."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(predictions) != len(truths):
        raise ValueError(
            f"predictions ({len(predictions)}) and truths ({len(truths)}) differ in length"
        )
    if not predictions:
        raise ValueError("cannot compute top-k error over zero samples")
    misses = 0
    for ranked, truth in zip(predictions, truths):
        if k > len(ranked):
            raise ValueError(f"k={k} exceeds ranked list length {len(ranked)}")
        if truth not in list(ranked[:k]):
            misses += 1
    return misses / len(predictions)


def fragment_accuracy(tp: int, tn: int, fp: int, fn: int) -> float:
    """(TP + TN) / (TP + FP + FN + TN) over recognized fragments."""
    for name, v in (("tp", tp), ("tn", tn), ("fp", fp), ("fn", fn)):
        if v < 0:
            raise ValueError(f"{name} must be non-negative, got {v}")
    total = tp + tn + fp + fn
    if total == 0:
        raise ValueError("fragment_accuracy requires at least one fragment")
    return (tp + tn) / total


def layout_regions_for_eval(layout_dict: dict) -> list[Region]:
    """Flatten a layout wire dict back into scored regions (tables, their
    cells, text blocks, handwriting) for comparison against truth."""
    from .geometry import BBox

    regions: list[Region] = []
    for rd in layout_dict["regions"]:
        regions.append(Region(BBox(*rd["bbox"]), RegionLabel(rd["class"]), rd["score"]))
        for cd in rd.get("cells", []):
            regions.append(Region(BBox(*cd["bbox"]), RegionLabel.CELL, cd["score"]))
    return regions
