"""Rectangle arithmetic shared by the whole pipeline: IoU, bounding union,
and class-wise non-maximum suppression."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class RegionLabel(str, Enum):
    HANDWRITING = "handwriting"
    TABLE = "table"
    CELL = "cell"
    TEXT_BLOCK = "text_block"


@dataclass(frozen=True)
class BBox:
    """Axis-aligned rectangle in pixel coordinates, origin top-left,
    y grows downward. Coordinates are real-valued, rectangles closed;
    area = (xmax - xmin) * (ymax - ymin)."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        for name in ("xmin", "ymin", "xmax", "ymax"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"BBox coordinate {name}={v!r} is not finite")
            object.__setattr__(self, name, float(v))
        if self.xmax <= self.xmin or self.ymax <= self.ymin:
            raise ValueError(
                f"BBox must have strictly positive extent, got "
                f"({self.xmin}, {self.ymin}, {self.xmax}, {self.ymax})"
            )

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, other: "BBox") -> bool:
        return (
            self.xmin <= other.xmin
            and self.ymin <= other.ymin
            and self.xmax >= other.xmax
            and self.ymax >= other.ymax
        )

    def as_list(self) -> list[float]:
        return [self.xmin, self.ymin, self.xmax, self.ymax]


@dataclass(frozen=True)
class Region:
    """A class-labeled, scored box: the unit of detection and combination."""

    bbox: BBox
    label: RegionLabel
    score: float

    def __post_init__(self):
        object.__setattr__(self, "label", RegionLabel(self.label))
        object.__setattr__(self, "score", float(self.score))
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"Region score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class NmsConfig:
    iou_threshold: float

    def __post_init__(self):
        if not (0.0 < self.iou_threshold <= 1.0):
            raise ValueError(
                f"NMS IoU threshold must lie in (0, 1], got {self.iou_threshold}"
            )


def intersection_area(a: BBox, b: BBox) -> float:
    """Area of the overlap rectangle; 0.0 when interiors are disjoint."""
    iw = min(a.xmax, b.xmax) - max(a.xmin, b.xmin)
    ih = min(a.ymax, b.ymax) - max(a.ymin, b.ymin)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    """Intersection area over union area of two boxes. Symmetric, in [0, 1]."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a.area + b.area - inter)


def bounding_union(a: BBox, b: BBox) -> BBox:
    """Minimal rectangle containing both boxes."""
    return BBox(
        min(a.xmin, b.xmin),
        min(a.ymin, b.ymin),
        max(a.xmax, b.xmax),
        max(a.ymax, b.ymax),
    )


def region_arrays(regions: list[Region]) -> np.ndarray:
    """Stack region boxes into an (n, 4) float array for vectorized overlap math."""
    return np.array([r.bbox.as_list() for r in regions], dtype=np.float64)


def _iou_one_vs_many(box: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    iw = np.minimum(box[2], boxes[:, 2]) - np.maximum(box[0], boxes[:, 0])
    ih = np.minimum(box[3], boxes[:, 3]) - np.maximum(box[1], boxes[:, 1])
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    area = (box[2] - box[0]) * (box[3] - box[1])
    areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    union = area + areas - inter
    return np.where(inter > 0.0, inter / union, 0.0)


def suppression_order(regions: list[Region]) -> np.ndarray:
    """Indices sorted by descending score; ties broken by larger area, then
    smaller xmin, then smaller ymin, so results are input-order independent."""
    scores = np.array([r.score for r in regions])
    areas = np.array([r.bbox.area for r in regions])
    xmins = np.array([r.bbox.xmin for r in regions])
    ymins = np.array([r.bbox.ymin for r in regions])
    # lexsort: last key is primary
    return np.lexsort((ymins, xmins, -areas, -scores))


def nms(regions: list[Region], cfg: NmsConfig) -> list[Region]:
    """Greedy non-maximum suppression over a single class.

    Keeps the highest-scored region, removes every remaining region whose IoU
    with it exceeds the threshold, and repeats. Output is sorted by descending
    score (with the deterministic tie-break of suppression_order).
    """
    if not regions:
        return []
    labels = {r.label for r in regions}
    if len(labels) > 1:
        raise ValueError(
            f"nms requires a single class, got {sorted(l.value for l in labels)}; "
            "partition regions by label first"
        )
    boxes = region_arrays(regions)
    order = suppression_order(regions)
    keep: list[int] = []
    while order.size:
        i = int(order[0])
        keep.append(i)
        rest = order[1:]
        if not rest.size:
            break
        ious = _iou_one_vs_many(boxes[i], boxes[rest])
        order = rest[ious <= cfg.iou_threshold]
    return [regions[i] for i in keep]
