"""Structuring engine: fragment combination, grid assignment, assembly, and
the wire format."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from docstruct.geometry import BBox, Region, RegionLabel, intersection_area, iou
from docstruct.layout import (
    CellPlacement,
    DocumentLayout,
    LayoutBlock,
    RcConfig,
    TableConfig,
    TableStructure,
    assemble_document,
    assign_cols,
    assign_rows,
    build_table,
    canonical_json,
    layout_from_dict,
    layout_to_dict,
    layout_to_json,
    region_combine,
    resolve_thresholds,
)


def _cell(x0, y0, x1, y1, score=1.0):
    return Region(BBox(x0, y0, x1, y1), RegionLabel.CELL, score)


def _text(x0, y0, x1, y1, score=1.0):
    return Region(BBox(x0, y0, x1, y1), RegionLabel.TEXT_BLOCK, score)


def _table(x0, y0, x1, y1, score=1.0):
    return Region(BBox(x0, y0, x1, y1), RegionLabel.TABLE, score)


class TestRegionCombine:
    def test_three_fragments_collapse_to_one(self):
        fragments = [
            _cell(0, 0, 40, 10, 0.9),
            _cell(35, 0, 80, 10, 0.8),
            _cell(75, 0, 120, 10, 0.7),
        ]
        out = region_combine(fragments)
        assert len(out) == 1
        assert out[0].bbox == BBox(0, 0, 120, 10)
        assert out[0].score == 0.9

    def test_disjoint_regions_unchanged(self):
        a = _text(0, 0, 50, 10, 0.9)
        b = _text(0, 100, 50, 110, 0.8)
        assert region_combine([a, b]) == [a, b]

    def test_single_candidate(self):
        a = _cell(0, 0, 10, 10, 0.4)
        assert region_combine([a]) == [a]

    def test_empty(self):
        assert region_combine([]) == []

    def test_mixed_class_rejected(self):
        with pytest.raises(ValueError):
            region_combine([_cell(0, 0, 1, 1), _text(2, 2, 3, 3)])

    def test_bridging_merge_reaches_fixed_point(self):
        # an L-shaped pair merges into a union that newly overlaps a third
        # region; the fixed-point iteration must absorb it too
        tall = _cell(0, 0, 3, 10, 0.7)
        wide = _cell(0, 8, 10, 10, 0.6)
        island = _cell(5, 4, 6, 5, 0.9)
        out = region_combine([tall, wide, island])
        assert len(out) == 1
        assert out[0].bbox == BBox(0, 0, 10, 10)
        assert out[0].score == 0.9

    @staticmethod
    def _random_fragment_sets(rng):
        """Fragment clusters resembling split-up detections: pieces of a few
        separated truth boxes with small neighbor overlaps."""
        regions = []
        sources = []
        for t in range(rng.integers(1, 4)):
            x0 = rng.uniform(0, 800)
            y0 = t * 300.0
            w = rng.uniform(100, 300)
            h = rng.uniform(10, 40)
            k = rng.integers(1, 5)
            cuts = np.sort(rng.uniform(0.15, 0.85, size=k - 1)) if k > 1 else np.array([])
            bounds = np.concatenate([[0.0], cuts, [1.0]])
            source = BBox(x0, y0, x0 + w, y0 + h)
            sources.append(source)
            for i in range(k):
                lo = bounds[i] - (0.1 * (bounds[i + 1] - bounds[i]) if i else 0.0)
                hi = bounds[i + 1] + (
                    0.1 * (bounds[i + 1] - bounds[i]) if i < k - 1 else 0.0
                )
                regions.append(
                    _cell(
                        x0 + max(lo, 0) * w,
                        y0,
                        x0 + min(hi, 1) * w,
                        y0 + h,
                        float(rng.uniform(0.3, 1.0)),
                    )
                )
        return regions, sources

    def test_randomized_outputs_disjoint_idempotent_and_covering(self):
        rng = np.random.default_rng(11)
        for _ in range(60):
            regions, _ = self._random_fragment_sets(rng)
            out = region_combine(regions)
            for i in range(len(out)):
                for j in range(i + 1, len(out)):
                    assert intersection_area(out[i].bbox, out[j].bbox) == 0.0
            assert region_combine(out) == out
            # no candidate lost: every fragment is contained in exactly one output
            for r in regions:
                holders = [o for o in out if o.bbox.contains(r.bbox)]
                assert len(holders) == 1


class TestAssignRows:
    def test_spanning_hand_trace(self):
        c1 = _cell(0, 0, 10, 10)
        c2 = _cell(20, 0, 30, 22)
        c3 = _cell(40, 20, 50, 30)
        result = assign_rows([c1, c2, c3], 5.0)
        rows = {id(c): r for c, r in result}
        assert rows[id(c1)] == {1}
        assert rows[id(c2)] == {1, 2}
        assert rows[id(c3)] == {2}

    def test_single_cell(self):
        c = _cell(0, 0, 10, 10)
        assert assign_rows([c], 5.0)[0][1] == {1}

    def test_large_gap_opens_new_row(self):
        c1 = _cell(0, 0, 10, 10)
        c2 = _cell(0, 100, 10, 110)
        result = dict((id(c), r) for c, r in assign_rows([c1, c2], 5.0))
        assert result[id(c1)] == {1}
        assert result[id(c2)] == {2}

    def test_errors(self):
        with pytest.raises(ValueError):
            assign_rows([], 5.0)
        with pytest.raises(ValueError):
            assign_rows([_cell(0, 0, 1, 1)], 0.0)
        with pytest.raises(ValueError):
            assign_rows([_text(0, 0, 1, 1)], 5.0)

    def test_row_indices_contiguous_from_one(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            cells = []
            y = 0.0
            for _row in range(rng.integers(1, 6)):
                h = rng.uniform(8, 20)
                for _c in range(rng.integers(1, 5)):
                    x = rng.uniform(0, 500)
                    cells.append(_cell(x, y, x + rng.uniform(5, 40), y + h))
                y += h + rng.uniform(6, 30)
            result = assign_rows(cells, 5.0)
            all_rows = set()
            for _, rows in result:
                ordered = sorted(rows)
                assert ordered == list(range(ordered[0], ordered[-1] + 1))
                all_rows |= rows
            assert all_rows == set(range(1, max(all_rows) + 1))


class TestAssignCols:
    def test_mirror_hand_trace(self):
        c1 = _cell(0, 0, 10, 10)
        c2 = _cell(0, 20, 22, 30)
        c3 = _cell(20, 40, 30, 50)
        result = {id(c): cols for c, cols in assign_cols([c1, c2, c3], 5.0)}
        assert result[id(c1)] == {1}
        assert result[id(c2)] == {1, 2}
        assert result[id(c3)] == {2}

    def test_single_cell(self):
        assert assign_cols([_cell(0, 0, 10, 10)], 5.0)[0][1] == {1}

    def test_two_separated_columns(self):
        c1 = _cell(0, 0, 10, 10)
        c2 = _cell(100, 0, 110, 10)
        result = {id(c): cols for c, cols in assign_cols([c1, c2], 5.0)}
        assert result[id(c1)] == {1}
        assert result[id(c2)] == {2}


class TestBuildTable:
    def test_clean_two_by_two_auto_thresholds(self):
        # auto mode: H = 10, W = 25; the 45px row gap and 35px column gap
        # clear both thresholds
        table = _table(-10, -10, 150, 80)
        cells = [
            _cell(0, 0, 50, 20),
            _cell(85, 0, 135, 20),
            _cell(0, 45, 50, 65),
            _cell(85, 45, 135, 65),
        ]
        structure = build_table(table, cells)
        assert structure.n_rows == 2 and structure.n_cols == 2
        spots = [(p.rows, p.cols) for p in structure.placements]
        assert spots == [((1,), (1,)), ((1,), (2,)), ((2,), (1,)), ((2,), (2,))]

    def test_clean_two_by_two_explicit_thresholds(self):
        # 10px gaps on both axes clear explicit thresholds of 5
        table = _table(-10, -10, 120, 60)
        cells = [
            _cell(0, 0, 50, 20),
            _cell(60, 0, 110, 20),
            _cell(0, 30, 50, 50),
            _cell(60, 30, 110, 50),
        ]
        cfg = TableConfig(row_height_threshold=5, col_width_threshold=5, auto_threshold=False)
        structure = build_table(table, cells, cfg)
        assert structure.n_rows == 2 and structure.n_cols == 2
        spots = [(p.rows, p.cols) for p in structure.placements]
        assert spots == [((1,), (1,)), ((1,), (2,)), ((2,), (1,)), ((2,), (2,))]

    def test_single_cell_grid(self):
        table = _table(0, 0, 100, 100)
        structure = build_table(table, [_cell(10, 10, 90, 90)])
        assert structure.n_rows == 1 and structure.n_cols == 1

    def test_vertical_span_inside_table(self):
        table = _table(-5, -5, 60, 40)
        c1 = _cell(0, 0, 10, 10)
        c2 = _cell(20, 0, 30, 22)
        c3 = _cell(40, 20, 50, 30)
        structure = build_table(
            table,
            [c1, c2, c3],
            TableConfig(row_height_threshold=5, col_width_threshold=5, auto_threshold=False),
        )
        by_bbox = {p.cell.bbox: p for p in structure.placements}
        assert by_bbox[c2.bbox].rows == (1, 2)
        assert structure.n_rows == 2

    def test_empty_grid_flagged_not_error(self):
        structure = build_table(_table(0, 0, 10, 10), [])
        assert structure.is_empty
        assert structure.n_rows == 0 and structure.n_cols == 0

    def test_cell_outside_table_rejected(self):
        with pytest.raises(ValueError):
            build_table(_table(0, 0, 10, 10), [_cell(50, 50, 60, 60)])

    def test_auto_thresholds_use_median(self):
        cells = [_cell(0, 0, 40, 10), _cell(50, 0, 90, 10), _cell(0, 30, 40, 44)]
        h, w = resolve_thresholds(cells, TableConfig())
        assert h == 0.5 * 10  # heights 10, 10, 14 -> median 10
        assert w == 0.5 * 40


class TestAssembleDocument:
    def test_orders_by_top_edge(self):
        text = _text(0, 50, 100, 60)
        table = _table(0, 10, 100, 40)
        layout = assemble_document("p1", [text, table])
        assert isinstance(layout.entries[0], TableStructure)
        assert isinstance(layout.entries[1], LayoutBlock)

    def test_tie_broken_by_xmin(self):
        a = _text(100, 0, 150, 10)
        b = _text(20, 0, 70, 10)
        layout = assemble_document("p1", [a, b])
        assert layout.entries[0].region is b

    def test_orphan_cell_demoted_to_flagged_text_block(self):
        orphan = _cell(200, 200, 220, 210, 0.4)
        layout = assemble_document("p1", [orphan])
        entry = layout.entries[0]
        assert isinstance(entry, LayoutBlock)
        assert entry.flagged
        assert entry.region.label is RegionLabel.TEXT_BLOCK
        assert entry.region.score == 0.4

    def test_cell_goes_to_most_overlapping_table(self):
        t1 = _table(0, 0, 100, 100)
        t2 = _table(110, 0, 210, 100)
        # straddles both tables but overlaps t2 more
        cell = _cell(90, 10, 130, 30)
        layout = assemble_document("p1", [t1, t2, cell])
        tables = [e for e in layout.entries if isinstance(e, TableStructure)]
        assert tables[0].is_empty
        assert len(tables[1].placements) == 1

    def test_no_cell_at_top_level(self):
        t = _table(0, 0, 100, 100)
        c = _cell(10, 10, 30, 30)
        layout = assemble_document("p1", [t, c])
        for entry in layout.entries:
            if isinstance(entry, LayoutBlock):
                assert entry.region.label is not RegionLabel.CELL


class TestWireFormat:
    def _sample_layout(self):
        return assemble_document(
            "page-7",
            [
                _table(0, 0, 130, 60, 0.95),
                _cell(10, 10, 50, 25, 0.9),
                _cell(80, 10, 120, 25, 0.85),
                _cell(10, 40, 50, 55, 0.8),
                _cell(80, 40, 120, 55, 0.75),
                _text(0, 100, 200, 130, 0.7),
                Region(BBox(0, 200, 80, 240), RegionLabel.HANDWRITING, 0.6),
            ],
        )

    def test_schema_shape(self):
        d = layout_to_dict(self._sample_layout())
        assert set(d) == {"page_id", "regions"}
        table = d["regions"][0]
        assert list(table) == ["class", "bbox", "score", "n_rows", "n_cols", "cells"]
        assert table["n_rows"] == 2 and table["n_cols"] == 2
        assert list(table["cells"][0]) == ["bbox", "rows", "cols", "score"]
        plain = d["regions"][1]
        assert list(plain) == ["class", "bbox", "score"]

    def test_serialization_is_stable(self):
        layout = self._sample_layout()
        assert layout_to_json(layout) == layout_to_json(layout)

    def test_round_trip(self):
        layout = self._sample_layout()
        restored = layout_from_dict(json.loads(layout_to_json(layout)))
        assert layout_to_json(restored) == layout_to_json(layout)

    def test_numbers_round_trip_shortest(self):
        # shortest round-trip float formatting, not padded decimals
        assert canonical_json({"x": 0.1}) == '{"x":0.1}'
        assert canonical_json({"x": 10.0}) == '{"x":10.0}'


class TestLayoutInvariants:
    def test_unsorted_entries_rejected(self):
        a = LayoutBlock(_text(0, 50, 10, 60))
        b = LayoutBlock(_text(0, 0, 10, 10))
        with pytest.raises(ValueError):
            DocumentLayout("p", (a, b))

    def test_top_level_cell_rejected(self):
        with pytest.raises(ValueError):
            DocumentLayout("p", (LayoutBlock(_cell(0, 0, 10, 10)),))

    def test_placement_contiguity_enforced(self):
        with pytest.raises(ValueError):
            CellPlacement(_cell(0, 0, 1, 1), rows=(1, 3), cols=(1,))
        with pytest.raises(ValueError):
            CellPlacement(_cell(0, 0, 1, 1), rows=(), cols=(1,))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            RcConfig(nms_iou_threshold=0.0)
        with pytest.raises(ValueError):
            TableConfig(auto_threshold=False, row_height_threshold=0, col_width_threshold=5)
