"""Structuring engine: fragment combination, row/column assignment for table
cells, table-grid assembly, and ordering of the final document layout."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from statistics import median
from typing import Union

import numpy as np

from .geometry import (
    BBox,
    NmsConfig,
    Region,
    RegionLabel,
    bounding_union,
    intersection_area,
    nms,
    region_arrays,
    suppression_order,
)


@dataclass(frozen=True)
class RcConfig:
    """Region-combination settings: a lenient NMS pass followed by merging of
    overlapping survivors. combine_min_overlap is an intersection area in
    square pixels; the default 0 merges on any positive overlap."""

    nms_iou_threshold: float = 0.7
    combine_min_overlap: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.nms_iou_threshold <= 1.0):
            raise ValueError(
                f"nms_iou_threshold must lie in (0, 1], got {self.nms_iou_threshold}"
            )
        if self.combine_min_overlap < 0.0:
            raise ValueError("combine_min_overlap must be >= 0")


@dataclass(frozen=True)
class TableConfig:
    """Thresholds for opening new rows (height gap > H) and columns
    (width gap > W). In auto mode each table derives its own thresholds as
    half the median cell height / width."""

    row_height_threshold: float = 0.0
    col_width_threshold: float = 0.0
    auto_threshold: bool = True

    def __post_init__(self):
        if not self.auto_threshold:
            if self.row_height_threshold <= 0 or self.col_width_threshold <= 0:
                raise ValueError(
                    "explicit table thresholds must be positive "
                    f"(H={self.row_height_threshold}, W={self.col_width_threshold})"
                )


@dataclass(frozen=True)
class CellPlacement:
    """A cell and the 1-based row/column indices it occupies (contiguous)."""

    cell: Region
    rows: tuple[int, ...]
    cols: tuple[int, ...]

    def __post_init__(self):
        for name, idx in (("rows", self.rows), ("cols", self.cols)):
            if not idx:
                raise ValueError(f"CellPlacement {name} must be non-empty")
            if any(i < 1 for i in idx):
                raise ValueError(f"CellPlacement {name} must be positive, got {idx}")
            if list(idx) != list(range(idx[0], idx[-1] + 1)):
                raise ValueError(f"CellPlacement {name} must be contiguous, got {idx}")


@dataclass(frozen=True)
class TableStructure:
    table: Region
    placements: tuple[CellPlacement, ...]
    n_rows: int
    n_cols: int

    def __post_init__(self):
        for p in self.placements:
            if max(p.rows) > self.n_rows or max(p.cols) > self.n_cols:
                raise ValueError(
                    f"placement {p.rows}x{p.cols} exceeds grid "
                    f"{self.n_rows}x{self.n_cols}"
                )

    @property
    def is_empty(self) -> bool:
        return not self.placements

    @property
    def bbox(self) -> BBox:
        return self.table.bbox


@dataclass(frozen=True)
class LayoutBlock:
    """Top-level non-table entry. flagged marks regions the pipeline demoted
    (e.g. a cell that intersected no table); the flag is internal review state
    and is not serialized."""

    region: Region
    flagged: bool = False

    @property
    def bbox(self) -> BBox:
        return self.region.bbox


LayoutEntry = Union[LayoutBlock, TableStructure]


@dataclass(frozen=True)
class DocumentLayout:
    """Structured page output: top-level entries sorted by ascending ymin
    (ties by xmin). Cells never appear at top level."""

    page_id: str
    entries: tuple[LayoutEntry, ...] = field(default_factory=tuple)

    def __post_init__(self):
        keys = [(e.bbox.ymin, e.bbox.xmin) for e in self.entries]
        if keys != sorted(keys):
            raise ValueError("layout entries must be sorted by (ymin, xmin)")
        for e in self.entries:
            if isinstance(e, LayoutBlock) and e.region.label is RegionLabel.CELL:
                raise ValueError("cell regions may not appear at top level")


def region_combine(candidates: list[Region], cfg: RcConfig = RcConfig()) -> list[Region]:
    """Collapse fragmented detections of one class into whole regions.

    Step 1 runs NMS at a lenient threshold so near-duplicates go but genuine
    fragments survive. Step 2 repeatedly merges any overlapping survivors into
    their bounding union (merged score = max of the pair), iterating until no
    merge fires anywhere, so transitively-overlapping chains collapse into one
    region and the output is pairwise non-overlapping.
    """
    if not candidates:
        return []
    labels = {r.label for r in candidates}
    if len(labels) > 1:
        raise ValueError(
            f"region_combine requires a single class, got "
            f"{sorted(l.value for l in labels)}"
        )
    merged = nms(candidates, NmsConfig(cfg.nms_iou_threshold))
    while True:
        result = _merge_pass(merged, cfg.combine_min_overlap)
        if len(result) == len(merged):
            return result
        merged = result


def _merge_pass(regions: list[Region], min_overlap: float) -> list[Region]:
    """One combination sweep: take the highest-scored live region, absorb
    everything overlapping it (rescanning after each absorption so chains
    collapse), emit, repeat over the remainder."""
    order = suppression_order(regions)
    boxes = region_arrays([regions[i] for i in order])
    scores = np.array([regions[i].score for i in order])
    label = regions[0].label
    alive = np.ones(len(order), dtype=bool)
    merged: list[Region] = []
    for i in range(len(order)):
        if not alive[i]:
            continue
        alive[i] = False
        cur = boxes[i].copy()
        cur_score = scores[i]
        while True:
            idx = np.nonzero(alive)[0]
            if not idx.size:
                break
            cand = boxes[idx]
            iw = np.minimum(cur[2], cand[:, 2]) - np.maximum(cur[0], cand[:, 0])
            ih = np.minimum(cur[3], cand[:, 3]) - np.maximum(cur[1], cand[:, 1])
            inter = np.maximum(iw, 0.0) * np.maximum(ih, 0.0)
            hits = idx[inter > min_overlap]
            if not hits.size:
                break
            cur[0] = min(cur[0], boxes[hits, 0].min())
            cur[1] = min(cur[1], boxes[hits, 1].min())
            cur[2] = max(cur[2], boxes[hits, 2].max())
            cur[3] = max(cur[3], boxes[hits, 3].max())
            cur_score = max(cur_score, scores[hits].max())
            alive[hits] = False
        merged.append(Region(BBox(*cur), label, cur_score))
    final_order = suppression_order(merged)
    return [merged[i] for i in final_order]


def assign_rows(cells: list[Region], height_threshold: float) -> list[tuple[Region, set[int]]]:
    """Assign 1-based row indices to table cells by scanning top edges.

    Cells are sorted by ymin (ties by xmin). A new row opens when the current
    cell's top edge is more than the threshold below the baseline; the
    baseline updates only when a row opens. When row n opens, every cell of
    row n-1 whose bottom edge passes the new top edge also receives row n,
    which is how vertically spanning cells accumulate multiple rows.
    """
    return _assign_axis(cells, height_threshold, axis="y")


def assign_cols(cells: list[Region], width_threshold: float) -> list[tuple[Region, set[int]]]:
    """Column analog of assign_rows: scan left edges, threshold on width gaps,
    horizontal spanning mirrored."""
    return _assign_axis(cells, width_threshold, axis="x")


def _assign_axis(cells: list[Region], threshold: float, axis: str) -> list[tuple[Region, set[int]]]:
    if not cells:
        raise ValueError("cannot assign rows/columns to an empty cell list")
    if threshold <= 0:
        raise ValueError(f"threshold must be positive, got {threshold}")
    bad = [r for r in cells if r.label is not RegionLabel.CELL]
    if bad:
        raise ValueError(f"all regions must be cells, got {bad[0].label.value}")

    if axis == "y":
        key = lambda r: (r.bbox.ymin, r.bbox.xmin)
        lo = lambda r: r.bbox.ymin
        hi = lambda r: r.bbox.ymax
    else:
        key = lambda r: (r.bbox.xmin, r.bbox.ymin)
        lo = lambda r: r.bbox.xmin
        hi = lambda r: r.bbox.xmax

    ordered = sorted(cells, key=key)
    assigned: list[set[int]] = [set() for _ in ordered]
    members: dict[int, list[int]] = {}
    n = 0
    last = -float("inf")
    for i, cell in enumerate(ordered):
        if lo(cell) - last > threshold:
            n += 1
            last = hi(cell)
            assigned[i].add(n)
            members.setdefault(n, []).append(i)
            for j in members.get(n - 1, []):
                if hi(ordered[j]) > lo(cell):
                    assigned[j].add(n)
                    members[n].append(j)
        else:
            assigned[i].add(n)
            members.setdefault(n, []).append(i)
    return list(zip(ordered, assigned))


def resolve_thresholds(cells: list[Region], cfg: TableConfig) -> tuple[float, float]:
    """Concrete (H, W) for a table: explicit values, or half the median cell
    height/width in auto mode."""
    if not cfg.auto_threshold:
        return cfg.row_height_threshold, cfg.col_width_threshold
    if not cells:
        raise ValueError("auto thresholds require at least one cell")
    h = 0.5 * median(r.bbox.height for r in cells)
    w = 0.5 * median(r.bbox.width for r in cells)
    return h, w


def build_table(table: Region, cells: list[Region], cfg: TableConfig = TableConfig()) -> TableStructure:
    """Construct the row/column grid of one table from its cell regions.

    Runs the row and column assignment passes and orders placements by
    (min row, min col). A table with no cells yields an empty 0x0 grid.
    """
    if table.label is not RegionLabel.TABLE:
        raise ValueError(f"expected a table region, got {table.label.value}")
    if not cells:
        return TableStructure(table=table, placements=(), n_rows=0, n_cols=0)
    for c in cells:
        if intersection_area(c.bbox, table.bbox) == 0.0:
            raise ValueError(f"cell {c.bbox.as_list()} does not intersect the table")
    h_thr, w_thr = resolve_thresholds(cells, cfg)
    row_map = {id(c): rows for c, rows in assign_rows(cells, h_thr)}
    col_map = {id(c): cols for c, cols in assign_cols(cells, w_thr)}
    placements = [
        CellPlacement(
            cell=c,
            rows=tuple(sorted(row_map[id(c)])),
            cols=tuple(sorted(col_map[id(c)])),
        )
        for c in cells
    ]
    placements.sort(key=lambda p: (p.rows[0], p.cols[0], p.cell.bbox.ymin, p.cell.bbox.xmin))
    n_rows = max(max(p.rows) for p in placements)
    n_cols = max(max(p.cols) for p in placements)
    return TableStructure(table=table, placements=tuple(placements), n_rows=n_rows, n_cols=n_cols)


def assemble_document(page_id: str, regions: list[Region], cfg: TableConfig = TableConfig()) -> DocumentLayout:
    """Nest cells into tables and order the page.

    Each cell goes to the table its bbox intersects most (by intersection
    area, ties to the table earlier in (ymin, xmin) order); cells touching no
    table are demoted to flagged text blocks. Tables become grid structures,
    and the top level is sorted by ascending ymin, ties by xmin.
    """
    tables = [r for r in regions if r.label is RegionLabel.TABLE]
    cells = [r for r in regions if r.label is RegionLabel.CELL]
    others = [r for r in regions if r.label not in (RegionLabel.TABLE, RegionLabel.CELL)]

    table_order = sorted(range(len(tables)), key=lambda i: (tables[i].bbox.ymin, tables[i].bbox.xmin))
    per_table: dict[int, list[Region]] = {i: [] for i in range(len(tables))}
    orphans: list[Region] = []
    if cells and tables:
        cell_boxes = region_arrays(cells)
        # tables in (ymin, xmin) order so area ties go to the earlier table
        table_boxes = region_arrays([tables[i] for i in table_order])
        iw = np.minimum(cell_boxes[:, None, 2], table_boxes[None, :, 2]) - np.maximum(
            cell_boxes[:, None, 0], table_boxes[None, :, 0]
        )
        ih = np.minimum(cell_boxes[:, None, 3], table_boxes[None, :, 3]) - np.maximum(
            cell_boxes[:, None, 1], table_boxes[None, :, 1]
        )
        inter = np.maximum(iw, 0.0) * np.maximum(ih, 0.0)
        best = np.argmax(inter, axis=1)
        best_area = inter[np.arange(len(cells)), best]
        for j, cell in enumerate(cells):
            if best_area[j] > 0.0:
                per_table[table_order[int(best[j])]].append(cell)
            else:
                orphans.append(cell)
    else:
        orphans.extend(cells)

    entries: list[LayoutEntry] = []
    for i, table in enumerate(tables):
        entries.append(build_table(table, per_table[i], cfg))
    for r in others:
        entries.append(LayoutBlock(region=r))
    for cell in orphans:
        entries.append(
            LayoutBlock(region=Region(cell.bbox, RegionLabel.TEXT_BLOCK, cell.score), flagged=True)
        )
    entries.sort(key=lambda e: (e.bbox.ymin, e.bbox.xmin))
    return DocumentLayout(page_id=page_id, entries=tuple(entries))


def region_to_dict(region: Region) -> dict:
    return {
        "class": region.label.value,
        "bbox": region.bbox.as_list(),
        "score": region.score,
    }


def region_from_dict(data: dict) -> Region:
    return Region(BBox(*data["bbox"]), RegionLabel(data["class"]), data["score"])


def layout_to_dict(layout: DocumentLayout) -> dict:
    """Wire-format dict: {"page_id", "regions": [...]}; tables carry their
    grid, every other region is {"class", "bbox", "score"}."""
    regions = []
    for e in layout.entries:
        if isinstance(e, TableStructure):
            regions.append(
                {
                    "class": e.table.label.value,
                    "bbox": e.table.bbox.as_list(),
                    "score": e.table.score,
                    "n_rows": e.n_rows,
                    "n_cols": e.n_cols,
                    "cells": [
                        {
                            "bbox": p.cell.bbox.as_list(),
                            "rows": list(p.rows),
                            "cols": list(p.cols),
                            "score": p.cell.score,
                        }
                        for p in e.placements
                    ],
                }
            )
        else:
            regions.append(
                {
                    "class": e.region.label.value,
                    "bbox": e.region.bbox.as_list(),
                    "score": e.region.score,
                }
            )
    return {"page_id": layout.page_id, "regions": regions}


def layout_from_dict(data: dict) -> DocumentLayout:
    """Inverse of layout_to_dict (flags are not round-tripped)."""
    entries: list[LayoutEntry] = []
    for rd in data["regions"]:
        label = RegionLabel(rd["class"])
        region = Region(BBox(*rd["bbox"]), label, rd["score"])
        if label is RegionLabel.TABLE:
            placements = tuple(
                CellPlacement(
                    cell=Region(BBox(*cd["bbox"]), RegionLabel.CELL, cd["score"]),
                    rows=tuple(cd["rows"]),
                    cols=tuple(cd["cols"]),
                )
                for cd in rd.get("cells", [])
            )
            entries.append(
                TableStructure(
                    table=region,
                    placements=placements,
                    n_rows=rd.get("n_rows", 0),
                    n_cols=rd.get("n_cols", 0),
                )
            )
        else:
            entries.append(LayoutBlock(region=region))
    return DocumentLayout(page_id=data["page_id"], entries=tuple(entries))


def canonical_json(obj) -> str:
    """Deterministic compact JSON; floats use the shortest round-trip form."""
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def layout_to_json(layout: DocumentLayout) -> str:
    return canonical_json(layout_to_dict(layout))
