"""Seeded generator of ground-truth page layouts plus a detector simulator
that turns them into noisy proposals (jitter, fragmentation, spurious boxes,
drops). Geometry only; no rendering."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .geometry import BBox, Region, RegionLabel, intersection_area
from .layout import canonical_json, region_from_dict, region_to_dict

IntRange = tuple[int, int]

# Spacing between placed top-level regions, px.
PLACEMENT_MARGIN = 8
TABLE_PADDING = 16
MAX_PLACEMENT_TRIES = 200


@dataclass(frozen=True)
class GenConfig:
    """Page-layout generation settings. Ranges are inclusive (lo, hi).

    Default cell and gap ranges keep every grid gap above half the largest
    cell extent, so auto-derived table thresholds always sit below the gaps
    and grid recovery is exact on clean data.
    """

    page_width: int = 2480
    page_height: int = 3508
    n_tables: IntRange = (1, 2)
    n_text_blocks: IntRange = (2, 6)
    n_handwriting: IntRange = (0, 4)
    table_rows: IntRange = (2, 6)
    table_cols: IntRange = (2, 5)
    cell_width: IntRange = (80, 140)
    cell_height: IntRange = (28, 44)
    cell_gap_x: IntRange = (75, 110)
    cell_gap_y: IntRange = (24, 40)
    text_block_width: IntRange = (200, 800)
    text_block_height: IntRange = (24, 120)
    handwriting_width: IntRange = (120, 420)
    handwriting_height: IntRange = (36, 140)
    seed: int = 0

    def __post_init__(self):
        if self.page_width <= 0 or self.page_height <= 0:
            raise ValueError("page dimensions must be positive")
        for name in (
            "n_tables",
            "n_text_blocks",
            "n_handwriting",
            "table_rows",
            "table_cols",
            "cell_width",
            "cell_height",
            "cell_gap_x",
            "cell_gap_y",
            "text_block_width",
            "text_block_height",
            "handwriting_width",
            "handwriting_height",
        ):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"range {name}=({lo}, {hi}) is empty")
        if self.table_rows[0] < 1 or self.table_cols[0] < 1:
            raise ValueError("tables need at least one row and one column")
        if self.cell_gap_x[0] <= 0 or self.cell_gap_y[0] <= 0:
            raise ValueError("cell gaps must be positive")


@dataclass(frozen=True)
class GroundTruthDoc:
    """Authoritative layout of one synthetic page. regions all carry score 1;
    cell_table maps cell region index -> owning table region index; cell_grid
    maps cell region index -> its (rows, cols) in the owning table."""

    page_id: str
    page_width: int
    page_height: int
    regions: tuple[Region, ...]
    cell_table: dict[int, int] = field(default_factory=dict)
    cell_grid: dict[int, tuple[tuple[int, ...], tuple[int, ...]]] = field(default_factory=dict)

    def __post_init__(self):
        for idx, table_idx in self.cell_table.items():
            cell = self.regions[idx]
            table = self.regions[table_idx]
            if cell.label is not RegionLabel.CELL or table.label is not RegionLabel.TABLE:
                raise ValueError("cell_table must map cell indices to table indices")
            if not table.bbox.contains(cell.bbox):
                raise ValueError(f"cell {idx} lies outside its table {table_idx}")
        by_class: dict[RegionLabel, list[Region]] = {}
        for r in self.regions:
            by_class.setdefault(r.label, []).append(r)
        for label, group in by_class.items():
            for i in range(len(group)):
                for j in range(i + 1, len(group)):
                    if intersection_area(group[i].bbox, group[j].bbox) > 0:
                        raise ValueError(f"overlapping {label.value} truth regions")

    def to_dict(self) -> dict:
        return {
            "page_id": self.page_id,
            "page_width": self.page_width,
            "page_height": self.page_height,
            "regions": [region_to_dict(r) for r in self.regions],
            "cell_table": {str(k): v for k, v in sorted(self.cell_table.items())},
            "cell_grid": {
                str(k): {"rows": list(rows), "cols": list(cols)}
                for k, (rows, cols) in sorted(self.cell_grid.items())
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GroundTruthDoc":
        return cls(
            page_id=data["page_id"],
            page_width=data["page_width"],
            page_height=data["page_height"],
            regions=tuple(region_from_dict(r) for r in data["regions"]),
            cell_table={int(k): v for k, v in data["cell_table"].items()},
            cell_grid={
                int(k): (tuple(v["rows"]), tuple(v["cols"]))
                for k, v in data["cell_grid"].items()
            },
        )


@dataclass(frozen=True)
class NoiseConfig:
    """Detector-noise model. Zero everywhere reproduces the truth exactly.

    fragmentation_rate is the per-region probability that a cell or text
    block splits into 2-4 overlapping fragments along its long axis (5-15%
    neighbor overlap). spurious_rate is the expected count of false boxes per
    page (Poisson). Survivor scores are 1 - U(0, score_spread)."""

    jitter_sigma: float = 0.0
    fragmentation_rate: float = 0.0
    spurious_rate: float = 0.0
    drop_rate: float = 0.0
    score_spread: float = 0.0
    spurious_score: tuple[float, float] = (0.05, 0.6)
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.fragmentation_rate <= 1.0):
            raise ValueError("fragmentation_rate must lie in [0, 1]")
        if not (0.0 <= self.drop_rate <= 1.0):
            raise ValueError("drop_rate must lie in [0, 1]")
        if self.spurious_rate < 0 or self.jitter_sigma < 0:
            raise ValueError("spurious_rate and jitter_sigma must be >= 0")
        if not (0.0 <= self.score_spread < 1.0):
            raise ValueError("score_spread must lie in [0, 1)")
        lo, hi = self.spurious_score
        if not (0.0 <= lo <= hi <= 1.0):
            raise ValueError("spurious_score must be an ordered range inside [0, 1]")


def _place_box(
    rng: random.Random,
    width: int,
    height: int,
    cfg: GenConfig,
    placed: list[BBox],
    what: str,
) -> BBox:
    if width + 2 > cfg.page_width or height + 2 > cfg.page_height:
        raise ValueError(
            f"page {cfg.page_width}x{cfg.page_height} too small for a "
            f"{what} of size {width}x{height}"
        )
    for _ in range(MAX_PLACEMENT_TRIES):
        x0 = rng.randint(1, cfg.page_width - width - 1)
        y0 = rng.randint(1, cfg.page_height - height - 1)
        box = BBox(x0, y0, x0 + width, y0 + height)
        padded = BBox(
            max(0.0, box.xmin - PLACEMENT_MARGIN),
            max(0.0, box.ymin - PLACEMENT_MARGIN),
            box.xmax + PLACEMENT_MARGIN,
            box.ymax + PLACEMENT_MARGIN,
        )
        if all(intersection_area(padded, p) == 0.0 for p in placed):
            return box
    raise ValueError(
        f"could not place a {what} of size {width}x{height} on a "
        f"{cfg.page_width}x{cfg.page_height} page after {MAX_PLACEMENT_TRIES} tries; "
        "reduce region counts or sizes"
    )


def generate_document(cfg: GenConfig, page_id: str | None = None) -> GroundTruthDoc:
    """Generate one ground-truth page, deterministic for a fixed config.

    Tables sit on exact grids (cells of one row share ymin, one column share
    xmin) with recorded (row, col) truth; text blocks and handwriting are
    placed rejection-sampled so all top-level regions stay disjoint.
    """
    rng = random.Random(f"gen:{cfg.seed}")
    if page_id is None:
        page_id = f"doc-{cfg.seed}"

    regions: list[Region] = []
    cell_table: dict[int, int] = {}
    cell_grid: dict[int, tuple[tuple[int, ...], tuple[int, ...]]] = {}
    placed: list[BBox] = []

    n_tables = rng.randint(*cfg.n_tables)
    n_text = rng.randint(*cfg.n_text_blocks)
    n_hand = rng.randint(*cfg.n_handwriting)

    for _ in range(n_tables):
        rows = rng.randint(*cfg.table_rows)
        cols = rng.randint(*cfg.table_cols)
        cw = rng.randint(*cfg.cell_width)
        ch = rng.randint(*cfg.cell_height)
        gx = rng.randint(*cfg.cell_gap_x)
        gy = rng.randint(*cfg.cell_gap_y)
        grid_w = cols * cw + (cols - 1) * gx
        grid_h = rows * ch + (rows - 1) * gy
        table_box = _place_box(
            rng, grid_w + 2 * TABLE_PADDING, grid_h + 2 * TABLE_PADDING, cfg, placed, "table"
        )
        placed.append(table_box)
        table_idx = len(regions)
        regions.append(Region(table_box, RegionLabel.TABLE, 1.0))
        for r in range(1, rows + 1):
            for c in range(1, cols + 1):
                x0 = table_box.xmin + TABLE_PADDING + (c - 1) * (cw + gx)
                y0 = table_box.ymin + TABLE_PADDING + (r - 1) * (ch + gy)
                cell_idx = len(regions)
                regions.append(Region(BBox(x0, y0, x0 + cw, y0 + ch), RegionLabel.CELL, 1.0))
                cell_table[cell_idx] = table_idx
                cell_grid[cell_idx] = ((r,), (c,))

    for _ in range(n_text):
        w = rng.randint(*cfg.text_block_width)
        h = rng.randint(*cfg.text_block_height)
        box = _place_box(rng, w, h, cfg, placed, "text block")
        placed.append(box)
        regions.append(Region(box, RegionLabel.TEXT_BLOCK, 1.0))

    for _ in range(n_hand):
        w = rng.randint(*cfg.handwriting_width)
        h = rng.randint(*cfg.handwriting_height)
        box = _place_box(rng, w, h, cfg, placed, "handwriting region")
        placed.append(box)
        regions.append(Region(box, RegionLabel.HANDWRITING, 1.0))

    return GroundTruthDoc(
        page_id=page_id,
        page_width=cfg.page_width,
        page_height=cfg.page_height,
        regions=tuple(regions),
        cell_table=cell_table,
        cell_grid=cell_grid,
    )


def generate_corpus(cfg: GenConfig, n_docs: int) -> list[GroundTruthDoc]:
    """n_docs pages, seeds cfg.seed .. cfg.seed + n_docs - 1."""
    docs = []
    for i in range(n_docs):
        doc_cfg = GenConfig(**{**cfg.__dict__, "seed": cfg.seed + i})
        docs.append(generate_document(doc_cfg, page_id=f"doc-{i:05d}"))
    return docs


def _poisson(rng: random.Random, lam: float) -> int:
    if lam <= 0:
        return 0
    limit = math.exp(-lam)
    k = 0
    p = 1.0
    while True:
        p *= rng.random()
        if p <= limit:
            return k
        k += 1


def _jitter_box(rng: random.Random, box: BBox, sigma: float, doc: GroundTruthDoc) -> BBox:
    if sigma <= 0:
        return box
    x0 = box.xmin + rng.gauss(0, sigma)
    y0 = box.ymin + rng.gauss(0, sigma)
    x1 = box.xmax + rng.gauss(0, sigma)
    y1 = box.ymax + rng.gauss(0, sigma)
    x0 = min(max(x0, 0.0), doc.page_width - 2.0)
    y0 = min(max(y0, 0.0), doc.page_height - 2.0)
    x1 = min(max(x1, x0 + 1.0), float(doc.page_width))
    y1 = min(max(y1, y0 + 1.0), float(doc.page_height))
    return BBox(x0, y0, x1, y1)


def _fragment_box(rng: random.Random, box: BBox) -> list[BBox]:
    """Split along the long axis into 2-4 segments that jointly cover the box,
    each pair of neighbors overlapping by 5-15% of the segment length."""
    k = rng.randint(2, 4)
    horizontal = box.width >= box.height
    length = box.width if horizontal else box.height
    # segment boundaries in normalized units, minimum segment share 0.15
    shares = [rng.uniform(0.15, 1.0) for _ in range(k)]
    total = sum(shares)
    bounds = [0.0]
    for s in shares:
        bounds.append(bounds[-1] + s / total)
    bounds[-1] = 1.0
    fragments = []
    for i in range(k):
        lo, hi = bounds[i], bounds[i + 1]
        seg = hi - lo
        if i > 0:
            lo -= rng.uniform(0.05, 0.15) * seg
        if i < k - 1:
            hi += rng.uniform(0.05, 0.15) * seg
        lo = max(lo, 0.0)
        hi = min(hi, 1.0)
        if horizontal:
            fragments.append(
                BBox(box.xmin + lo * length, box.ymin, box.xmin + hi * length, box.ymax)
            )
        else:
            fragments.append(
                BBox(box.xmin, box.ymin + lo * length, box.xmax, box.ymin + hi * length)
            )
    return fragments


_FRAGMENTABLE = (RegionLabel.CELL, RegionLabel.TEXT_BLOCK)


def simulate_proposals(gt: GroundTruthDoc, noise: NoiseConfig) -> list[Region]:
    """Noisy detector stand-in: deterministic for (ground truth, noise seed).

    With a zero noise config the proposals are exactly the truth regions at
    score 1. Fragmentation applies to cells and text blocks only; tables and
    handwriting keep single boxes."""
    rng = random.Random(f"sim:{noise.seed}:{gt.page_id}")
    proposals: list[Region] = []
    for region in gt.regions:
        if noise.drop_rate > 0 and rng.random() < noise.drop_rate:
            continue
        fragment = (
            region.label in _FRAGMENTABLE
            and noise.fragmentation_rate > 0
            and rng.random() < noise.fragmentation_rate
        )
        boxes = _fragment_box(rng, region.bbox) if fragment else [region.bbox]
        for box in boxes:
            jittered = _jitter_box(rng, box, noise.jitter_sigma, gt)
            score = 1.0 - (rng.uniform(0, noise.score_spread) if noise.score_spread > 0 else 0.0)
            proposals.append(Region(jittered, region.label, score))
    for _ in range(_poisson(rng, noise.spurious_rate)):
        label = rng.choice(list(RegionLabel))
        w = rng.randint(30, 300)
        h = rng.randint(15, 120)
        x0 = rng.randint(0, max(1, gt.page_width - w - 1))
        y0 = rng.randint(0, max(1, gt.page_height - h - 1))
        score = rng.uniform(*noise.spurious_score)
        proposals.append(Region(BBox(x0, y0, x0 + w, y0 + h), label, score))
    return proposals


def write_truth_jsonl(docs: Iterable[GroundTruthDoc], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            f.write(canonical_json(doc.to_dict()) + "\n")


def read_truth_jsonl(path: str | Path) -> list[GroundTruthDoc]:
    import json

    docs = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                docs.append(GroundTruthDoc.from_dict(json.loads(line)))
    return docs


def write_proposals_jsonl(records: Iterable[tuple[str, list[Region]]], path: str | Path) -> None:
    """records: (page_id, proposals) pairs, one JSON object per line."""
    with open(path, "w", encoding="utf-8") as f:
        for page_id, proposals in records:
            f.write(
                canonical_json(
                    {"page_id": page_id, "proposals": [region_to_dict(r) for r in proposals]}
                )
                + "\n"
            )


def read_proposals_jsonl(path: str | Path) -> list[tuple[str, list[Region]]]:
    import json

    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                data = json.loads(line)
                out.append(
                    (data["page_id"], [region_from_dict(r) for r in data["proposals"]])
                )
    return out
