"""Rectangle arithmetic: exact fixtures plus randomized properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from docstruct.geometry import (
    BBox,
    NmsConfig,
    Region,
    RegionLabel,
    bounding_union,
    intersection_area,
    iou,
    nms,
)


def raster_iou(a: BBox, b: BBox, step: float = 1.0) -> float:
    """Independent pixel-counting oracle: rasterize both boxes onto a unit
    grid and count covered cells."""
    xs = np.arange(min(a.xmin, b.xmin), max(a.xmax, b.xmax), step) + step / 2
    ys = np.arange(min(a.ymin, b.ymin), max(a.ymax, b.ymax), step) + step / 2
    gx, gy = np.meshgrid(xs, ys)
    in_a = (gx > a.xmin) & (gx < a.xmax) & (gy > a.ymin) & (gy < a.ymax)
    in_b = (gx > b.xmin) & (gx < b.xmax) & (gy > b.ymin) & (gy < b.ymax)
    union = np.count_nonzero(in_a | in_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(in_a & in_b) / union


@st.composite
def bboxes(draw, lo=0.0, hi=500.0):
    x0 = draw(st.floats(lo, hi, allow_nan=False, allow_infinity=False))
    y0 = draw(st.floats(lo, hi, allow_nan=False, allow_infinity=False))
    w = draw(st.floats(0.5, 100.0))
    h = draw(st.floats(0.5, 100.0))
    return BBox(x0, y0, x0 + w, y0 + h)


class TestBBox:
    def test_rejects_inverted_or_flat(self):
        with pytest.raises(ValueError):
            BBox(10, 0, 5, 5)
        with pytest.raises(ValueError):
            BBox(0, 0, 10, 0)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            BBox(0, 0, float("inf"), 10)
        with pytest.raises(ValueError):
            BBox(float("nan"), 0, 5, 5)

    def test_area(self):
        assert BBox(0, 0, 10, 5).area == 50.0


class TestRegion:
    def test_score_range(self):
        box = BBox(0, 0, 1, 1)
        with pytest.raises(ValueError):
            Region(box, RegionLabel.CELL, 1.5)
        with pytest.raises(ValueError):
            Region(box, RegionLabel.CELL, -0.1)

    def test_label_coercion(self):
        r = Region(BBox(0, 0, 1, 1), "table", 0.5)
        assert r.label is RegionLabel.TABLE

    def test_unknown_label(self):
        with pytest.raises(ValueError):
            Region(BBox(0, 0, 1, 1), "figure", 0.5)


class TestIou:
    def test_identity(self):
        box = BBox(0, 0, 10, 10)
        assert iou(box, box) == 1.0

    def test_disjoint(self):
        assert iou(BBox(0, 0, 1, 1), BBox(5, 5, 6, 6)) == 0.0

    def test_half_overlap_against_raster_oracle(self):
        a = BBox(0, 0, 10, 10)
        b = BBox(5, 0, 15, 10)
        # intersection 50, union 150; the 20x20 rasterized count agrees
        assert raster_iou(a, b) == pytest.approx(1 / 3)
        assert iou(a, b) == pytest.approx(1 / 3)

    def test_edge_touching_boxes_are_disjoint(self):
        assert iou(BBox(0, 0, 10, 10), BBox(10, 0, 20, 10)) == 0.0

    @given(bboxes(), bboxes())
    def test_symmetric(self, a, b):
        assert iou(a, b) == pytest.approx(iou(b, a))

    @given(bboxes(), bboxes())
    def test_bounded(self, a, b):
        v = iou(a, b)
        assert 0.0 <= v <= 1.0

    @given(bboxes())
    def test_self_iou_is_one(self, a):
        assert iou(a, a) == pytest.approx(1.0)

    def test_matches_raster_oracle_on_random_pairs(self):
        # rasterization error scales with step * perimeter / union area, so
        # keep boxes reasonably large and the grid fine
        rng = np.random.default_rng(7)
        for _ in range(25):
            x0, y0, x1, y1 = rng.uniform(0, 100, size=4)
            a = BBox(x0, y0, x0 + rng.uniform(8, 60), y0 + rng.uniform(8, 60))
            b = BBox(x1, y1, x1 + rng.uniform(8, 60), y1 + rng.uniform(8, 60))
            assert iou(a, b) == pytest.approx(raster_iou(a, b, step=0.25), abs=0.05)


class TestBoundingUnion:
    def test_overlapping(self):
        assert bounding_union(BBox(0, 0, 2, 2), BBox(1, 1, 3, 3)) == BBox(0, 0, 3, 3)

    def test_identity(self):
        box = BBox(0, 0, 2, 2)
        assert bounding_union(box, box) == box

    def test_disjoint(self):
        assert bounding_union(BBox(0, 0, 1, 1), BBox(5, 5, 6, 6)) == BBox(0, 0, 6, 6)

    @given(bboxes(), bboxes())
    def test_contains_both_and_dominates_area(self, a, b):
        u = bounding_union(a, b)
        assert u.contains(a) and u.contains(b)
        assert u.area >= max(a.area, b.area)

    @given(bboxes(), bboxes())
    def test_commutative(self, a, b):
        assert bounding_union(a, b) == bounding_union(b, a)


def _cell(x0, y0, x1, y1, score):
    return Region(BBox(x0, y0, x1, y1), RegionLabel.CELL, score)


class TestNms:
    def test_single_region_passes_through(self):
        r = _cell(0, 0, 10, 10, 0.9)
        assert nms([r], NmsConfig(0.5)) == [r]

    def test_empty(self):
        assert nms([], NmsConfig(0.5)) == []

    def test_identical_boxes_keep_best_score(self):
        a = _cell(0, 0, 10, 10, 0.9)
        b = _cell(0, 0, 10, 10, 0.8)
        assert nms([a, b], NmsConfig(0.7)) == [a]
        assert nms([b, a], NmsConfig(0.7)) == [a]

    def test_threshold_decides_suppression(self):
        # IoU of the pair is exactly 1/3
        a = _cell(0, 0, 10, 10, 0.9)
        b = _cell(5, 0, 15, 10, 0.8)
        assert nms([a, b], NmsConfig(0.3)) == [a]
        assert nms([a, b], NmsConfig(0.7)) == [a, b]

    def test_mixed_class_rejected(self):
        a = _cell(0, 0, 10, 10, 0.9)
        b = Region(BBox(0, 0, 10, 10), RegionLabel.TABLE, 0.8)
        with pytest.raises(ValueError, match="partition"):
            nms([a, b], NmsConfig(0.5))

    def test_output_sorted_by_score(self):
        regions = [
            _cell(0, 0, 10, 10, 0.5),
            _cell(100, 0, 110, 10, 0.9),
            _cell(200, 0, 210, 10, 0.7),
        ]
        kept = nms(regions, NmsConfig(0.5))
        assert [r.score for r in kept] == [0.9, 0.7, 0.5]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            NmsConfig(0.0)
        with pytest.raises(ValueError):
            NmsConfig(1.2)

    @given(
        st.lists(
            st.tuples(bboxes(lo=0.0, hi=200.0), st.floats(0.0, 1.0)),
            min_size=1,
            max_size=12,
        ),
        st.floats(0.1, 0.9),
        st.randoms(use_true_random=False),
    )
    @settings(max_examples=60, deadline=None)
    def test_pairwise_iou_bounded_and_order_invariant(self, items, threshold, rnd):
        regions = [Region(b, RegionLabel.CELL, s) for b, s in items]
        cfg = NmsConfig(threshold)
        kept = nms(regions, cfg)
        for i in range(len(kept)):
            for j in range(i + 1, len(kept)):
                assert iou(kept[i].bbox, kept[j].bbox) <= threshold + 1e-12
        shuffled = list(regions)
        rnd.shuffle(shuffled)
        assert nms(shuffled, cfg) == kept

    @given(
        st.lists(
            st.tuples(bboxes(lo=0.0, hi=200.0), st.floats(0.0, 1.0)),
            min_size=1,
            max_size=12,
        ),
        st.floats(0.1, 0.9),
    )
    @settings(max_examples=60, deadline=None)
    def test_removed_only_when_overlapped_by_kept(self, items, threshold):
        regions = [Region(b, RegionLabel.CELL, s) for b, s in items]
        kept = nms(regions, NmsConfig(threshold))
        kept_set = set(id(r) for r in kept)
        for r in regions:
            if id(r) in kept_set:
                continue
            suppressors = [
                k
                for k in kept
                if iou(k.bbox, r.bbox) > threshold and k.score >= r.score
            ]
            assert suppressors, f"{r} was removed without an overlapping keeper"


class TestIntersectionArea:
    def test_matches_manual(self):
        assert intersection_area(BBox(0, 0, 10, 10), BBox(5, 0, 15, 10)) == 50.0

    def test_disjoint_zero(self):
        assert intersection_area(BBox(0, 0, 1, 1), BBox(2, 2, 3, 3)) == 0.0
