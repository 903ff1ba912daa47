"""Document service: ingestion through the structuring pipeline, layout
retrieval, correction staging with durable acknowledgment, and the periodic
incremental-training trigger that turns staged corrections into a new model
version."""

from __future__ import annotations

import datetime
import math
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .classifier import GroupedClassifier
from .evaluation import layout_regions_for_eval
from .geometry import BBox, NmsConfig, Region, RegionLabel, nms
from .incremental import Dataset, TrainConfig, fit_classifier, incremental_train
from .layout import (
    DocumentLayout,
    LayoutBlock,
    RcConfig,
    TableConfig,
    TableStructure,
    assemble_document,
    canonical_json,
    layout_to_dict,
    region_combine,
    region_from_dict,
)
from .storage import EventLog, ModelStore
from .synth import GenConfig, NoiseConfig, generate_document, simulate_proposals

# class indices for the region-label classifier behind the training trigger
CLASS_ORDER = (
    RegionLabel.HANDWRITING,
    RegionLabel.TABLE,
    RegionLabel.CELL,
    RegionLabel.TEXT_BLOCK,
)
CLASS_TO_INDEX = {label: i for i, label in enumerate(CLASS_ORDER)}

FEATURE_DIM = 16
DEFAULT_PAGE = (2480, 3508)

EDIT_ACTIONS = ("move_resize", "relabel", "delete", "add")


class UnknownPageError(KeyError):
    pass


class UnknownJobError(KeyError):
    pass


class PayloadError(ValueError):
    """Validation failure; fields lists the offending locations."""

    def __init__(self, message: str, fields: list[str]):
        super().__init__(message)
        self.fields = fields


class DocumentStatus(str, Enum):
    DETECTED = "detected"
    REVIEWED = "reviewed"
    FINALIZED = "finalized"


@dataclass(frozen=True)
class PipelineConfig:
    """Per-class post-processing: handwriting gets a strict NMS; layout
    classes go through the combine step (lenient NMS + overlap merging).
    combine_enabled=False falls back to plain NMS at the lenient threshold
    for the layout classes, for ablation."""

    handwriting_nms_iou: float = 0.3
    rc: RcConfig = field(default_factory=RcConfig)
    table: TableConfig = field(default_factory=TableConfig)
    combine_enabled: bool = True


def run_pipeline(page_id: str, proposals: list[Region], cfg: PipelineConfig = PipelineConfig()) -> DocumentLayout:
    """Proposals -> combined regions per class -> nested, ordered layout."""
    combined: list[Region] = []
    by_label: dict[RegionLabel, list[Region]] = {}
    for r in proposals:
        by_label.setdefault(r.label, []).append(r)
    for label, group in by_label.items():
        if label is RegionLabel.HANDWRITING:
            combined.extend(nms(group, NmsConfig(cfg.handwriting_nms_iou)))
        elif cfg.combine_enabled:
            combined.extend(region_combine(group, cfg.rc))
        else:
            combined.extend(nms(group, NmsConfig(cfg.rc.nms_iou_threshold)))
    return assemble_document(page_id, combined, cfg.table)


def region_features(region: Region, page_width: float, page_height: float) -> np.ndarray:
    """16 geometric features of a region, normalized to the page."""
    b = region.bbox
    w, h = b.width, b.height
    rw, rh = w / page_width, h / page_height
    area = rw * rh
    return np.array(
        [
            (b.xmin + b.xmax) / 2 / page_width,
            (b.ymin + b.ymax) / 2 / page_height,
            rw,
            rh,
            b.xmin / page_width,
            b.ymin / page_height,
            b.xmax / page_width,
            b.ymax / page_height,
            area,
            math.sqrt(area),
            math.log(w / h),
            math.log1p(w),
            math.log1p(h),
            region.score,
            min(rw, rh),
            max(rw, rh),
        ]
    )


def build_base_dataset(seed: int, n_docs: int = 30) -> Dataset:
    """Featurized truth regions of a seeded synthetic corpus: the original
    training distribution for the region-label classifier."""
    features, labels = [], []
    for i in range(n_docs):
        doc = generate_document(GenConfig(seed=seed + i), page_id=f"base-{i}")
        for r in doc.regions:
            features.append(region_features(r, doc.page_width, doc.page_height))
            labels.append(CLASS_TO_INDEX[r.label])
    return Dataset(np.array(features), np.array(labels))


@dataclass
class DocumentRecord:
    page_id: str
    regions: list[Region]  # editable flat set the layout is assembled from
    layout: DocumentLayout
    status: DocumentStatus
    page_width: float
    page_height: float
    layout_json: str = ""


@dataclass
class StagedCorrection:
    correction_id: int
    page_id: str
    record: dict
    samples: list[tuple[np.ndarray, int]]


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


class DocumentService:
    """Single-process service with durable, replayable state.

    Every mutation is appended (and fsynced) to the event log before it is
    acknowledged, and applied to in-memory state under one writer lock;
    restart replays the log. Reads serve immutable snapshots without locking.
    """

    def __init__(self, data_dir: str | Path, pipeline: PipelineConfig = PipelineConfig(),
                 train: TrainConfig | None = None, base_seed: int = 1000,
                 base_docs: int = 30):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.pipeline = pipeline
        self.train_cfg = train or TrainConfig(max_steps=300, eval_every=20, patience=5, seed=0)
        self.base_seed = base_seed
        self.base_docs = base_docs

        self.log = EventLog(self.data_dir / "events.log")
        self.models = ModelStore(self.data_dir / "models")

        self._write_lock = threading.RLock()
        self._documents: dict[str, DocumentRecord] = {}
        self._staged: list[StagedCorrection] = []
        self._jobs: dict[str, dict] = {}
        self._page_counter = 0
        self._correction_counter = 0
        self._job_counter = 0
        self._model_version = 0

        for event in self.log.replay():
            self._apply_event(event)

    # -- event application (shared by live calls and replay) ---------------

    def _apply_event(self, event: dict) -> None:
        kind = event["type"]
        if kind == "ingest":
            self._apply_ingest(event)
        elif kind == "correction":
            self._apply_correction(event)
        elif kind == "training":
            self._apply_training(event)
        else:
            raise ValueError(f"unknown event type {kind!r}")

    def _apply_ingest(self, event: dict) -> None:
        page_id = event["page_id"]
        payload = event["payload"]
        proposals, page_w, page_h = _proposals_from_payload(payload)
        layout = run_pipeline(page_id, proposals, self.pipeline)
        record = DocumentRecord(
            page_id=page_id,
            regions=_editable_regions(layout),
            layout=layout,
            status=DocumentStatus.DETECTED,
            page_width=page_w,
            page_height=page_h,
        )
        record.layout_json = canonical_json(layout_to_dict(layout))
        self._documents[page_id] = record
        self._page_counter = max(self._page_counter, int(page_id.split("-")[-1]))

    def _apply_correction(self, event: dict) -> None:
        page_id = event["page_id"]
        record = self._documents[page_id]
        edits = event["record"]["edits"]
        # targets reference the pre-edit layout: derive samples first
        samples = _samples_from_edits(record, edits)
        new_regions = _apply_edits(record, edits)
        layout = assemble_document(page_id, new_regions, self.pipeline.table)
        record.regions = _editable_regions(layout)
        record.layout = layout
        record.layout_json = canonical_json(layout_to_dict(layout))
        record.status = DocumentStatus.REVIEWED
        correction_id = event["correction_id"]
        self._staged.append(
            StagedCorrection(correction_id, page_id, event["record"], samples)
        )
        self._correction_counter = max(self._correction_counter, correction_id)

    def _apply_training(self, event: dict) -> None:
        job = event["job"]
        self._jobs[job["job_id"]] = job
        consumed = set(job["correction_ids"])
        self._staged = [s for s in self._staged if s.correction_id not in consumed]
        self._job_counter = max(self._job_counter, int(job["job_id"].split("-")[-1]))
        self._model_version = max(self._model_version, job["model_version"])

    # -- operations ---------------------------------------------------------

    def ingest_document(self, payload: dict) -> str:
        """Validate, run the pipeline, persist, return the new page id."""
        _validate_ingest_payload(payload)
        with self._write_lock:
            self._page_counter += 1
            page_id = f"page-{self._page_counter:06d}"
            event = {"type": "ingest", "page_id": page_id, "payload": payload}
            self.log.append(event)
            self._apply_ingest(event)
        return page_id

    def get_layout(self, page_id: str) -> str:
        """Canonical layout JSON; byte-identical across calls absent edits."""
        record = self._documents.get(page_id)
        if record is None:
            raise UnknownPageError(page_id)
        return record.layout_json

    def get_document(self, page_id: str) -> DocumentRecord:
        record = self._documents.get(page_id)
        if record is None:
            raise UnknownPageError(page_id)
        return record

    def submit_correction(self, page_id: str, record: dict) -> dict:
        """Atomically validate and apply an edit batch; the correction is
        durable in the staging log before the acknowledgment returns."""
        doc = self._documents.get(page_id)
        if doc is None:
            raise UnknownPageError(page_id)
        with self._write_lock:
            _validate_correction(doc, record)
            stored = {
                "operator": record["operator"],
                "edits": record["edits"],
                "timestamp": record.get("timestamp") or _utc_now(),
            }
            self._correction_counter += 1
            event = {
                "type": "correction",
                "page_id": page_id,
                "correction_id": self._correction_counter,
                "record": stored,
            }
            self.log.append(event)
            self._apply_correction(event)
            return {
                "page_id": page_id,
                "correction_id": event["correction_id"],
                "staged": len(self._staged),
                "status": self._documents[page_id].status.value,
            }

    def trigger_incremental_training(self, overrides: dict | None = None) -> dict:
        """Consume every staged correction into a training job and record the
        new model version. No-op when nothing is staged."""
        with self._write_lock:
            if not self._staged:
                return {"status": "no_op", "reason": "no staged corrections"}
            samples = [s for staged in self._staged for s in staged.samples]
            if not samples:
                return {"status": "no_op", "reason": "staged corrections carry no trainable samples"}
            cfg = self.train_cfg
            if overrides:
                cfg = replace(cfg, **overrides)

            original = build_base_dataset(self.base_seed, self.base_docs)
            if self._model_version == 0:
                base = GroupedClassifier.create(FEATURE_DIM, (64, 64), len(CLASS_ORDER), seed=cfg.seed)
                base = fit_classifier(base, original, cfg)
                self._model_version = 1
                self.models.save(base, 1)
            current = self.models.load(self._model_version)

            feedback = Dataset(
                np.array([f for f, _ in samples]), np.array([lbl for _, lbl in samples])
            )
            trained = incremental_train(current, original, feedback, cfg)
            new_version = self._model_version + 1
            self.models.save(trained, new_version)

            self._job_counter += 1
            job = {
                "job_id": f"job-{self._job_counter}",
                "status": "completed",
                "consumed": len(self._staged),
                "correction_ids": [s.correction_id for s in self._staged],
                "model_version": new_version,
            }
            event = {"type": "training", "job": job}
            self.log.append(event)
            self._apply_training(event)
            return job

    def get_job(self, job_id: str) -> dict:
        job = self._jobs.get(job_id)
        if job is None:
            raise UnknownJobError(job_id)
        return job

    def current_model(self) -> dict:
        versions = self.models.versions()
        if not versions:
            raise FileNotFoundError("no model has been trained yet")
        model = self.models.load(versions[-1])
        return {
            "version": versions[-1],
            "head": model.head,
            "n_classes": model.n_classes,
            "n_groups": model.n_groups,
        }

    @property
    def staged_corrections(self) -> list[StagedCorrection]:
        return list(self._staged)

    def close(self) -> None:
        self.log.close()


# -- payload handling --------------------------------------------------------


def _validate_ingest_payload(payload: dict) -> None:
    if not isinstance(payload, dict):
        raise PayloadError("payload must be an object", ["$"])
    has_proposals = "proposals" in payload
    has_synth = "synth" in payload
    if has_proposals == has_synth:
        raise PayloadError(
            "payload must contain exactly one of 'proposals' or 'synth'",
            ["proposals", "synth"],
        )
    bad: list[str] = []
    if has_proposals:
        proposals = payload["proposals"]
        if not isinstance(proposals, list):
            raise PayloadError("'proposals' must be an array", ["proposals"])
        for i, item in enumerate(proposals):
            loc = f"proposals[{i}]"
            if not isinstance(item, dict):
                bad.append(loc)
                continue
            for key in ("class", "bbox", "score"):
                if key not in item:
                    bad.append(f"{loc}.{key}")
            if bad and bad[-1].startswith(loc):
                continue
            try:
                region_from_dict(item)
            except (ValueError, TypeError):
                bad.append(loc)
    else:
        spec = payload["synth"]
        if not isinstance(spec, dict):
            raise PayloadError("'synth' must be an object", ["synth"])
        try:
            GenConfig(**spec.get("gen", {}))
        except (TypeError, ValueError):
            bad.append("synth.gen")
        try:
            NoiseConfig(**spec.get("noise", {}))
        except (TypeError, ValueError):
            bad.append("synth.noise")
    if bad:
        raise PayloadError(f"invalid payload fields: {', '.join(bad)}", bad)


def _proposals_from_payload(payload: dict) -> tuple[list[Region], float, float]:
    if "proposals" in payload:
        regions = [region_from_dict(r) for r in payload["proposals"]]
        page_w = float(payload.get("page_width", DEFAULT_PAGE[0]))
        page_h = float(payload.get("page_height", DEFAULT_PAGE[1]))
        return regions, page_w, page_h
    spec = payload["synth"]
    gen = GenConfig(**spec.get("gen", {}))
    doc = generate_document(gen)
    noise = NoiseConfig(**spec.get("noise", {}))
    return simulate_proposals(doc, noise), float(gen.page_width), float(gen.page_height)


# -- corrections --------------------------------------------------------------


def _editable_regions(layout: DocumentLayout) -> list[Region]:
    """Flatten a layout into the region set edits operate on and assembly
    rebuilds from."""
    regions: list[Region] = []
    for entry in layout.entries:
        if isinstance(entry, TableStructure):
            regions.append(entry.table)
            regions.extend(p.cell for p in entry.placements)
        else:
            regions.append(entry.region)
    return regions


def _resolve_target(layout: DocumentLayout, target) -> Region:
    if (
        not isinstance(target, list)
        or not target
        or len(target) > 2
        or not all(isinstance(t, int) and t >= 0 for t in target)
    ):
        raise KeyError(target)
    entry = layout.entries[target[0]] if target[0] < len(layout.entries) else None
    if entry is None:
        raise KeyError(target)
    if len(target) == 1:
        return entry.table if isinstance(entry, TableStructure) else entry.region
    if not isinstance(entry, TableStructure) or target[1] >= len(entry.placements):
        raise KeyError(target)
    return entry.placements[target[1]].cell


def _validate_correction(doc: DocumentRecord, record: dict) -> None:
    bad: list[str] = []
    if not isinstance(record, dict):
        raise PayloadError("correction must be an object", ["$"])
    if not isinstance(record.get("operator"), str) or not record.get("operator"):
        bad.append("operator")
    edits = record.get("edits")
    if not isinstance(edits, list) or not edits:
        bad.append("edits")
        raise PayloadError("correction needs a non-empty edits array", bad)
    for i, edit in enumerate(edits):
        loc = f"edits[{i}]"
        if not isinstance(edit, dict):
            bad.append(loc)
            continue
        action = edit.get("action")
        if action not in EDIT_ACTIONS:
            bad.append(f"{loc}.action")
            continue
        if action == "add":
            region = edit.get("region")
            try:
                region_from_dict(region)
            except (ValueError, TypeError, KeyError):
                bad.append(f"{loc}.region")
            continue
        try:
            _resolve_target(doc.layout, edit.get("target"))
        except (KeyError, IndexError):
            bad.append(f"{loc}.target")
            continue
        if action == "move_resize":
            try:
                BBox(*edit.get("bbox"))
            except (ValueError, TypeError):
                bad.append(f"{loc}.bbox")
        elif action == "relabel":
            try:
                RegionLabel(edit.get("label"))
            except ValueError:
                bad.append(f"{loc}.label")
    if bad:
        raise PayloadError(f"invalid correction fields: {', '.join(bad)}", bad)


def _apply_edits(doc: DocumentRecord, edits: list[dict]) -> list[Region]:
    """Produce the edited region set. Targets resolve against the current
    layout; the batch was validated as a whole before anything is applied."""
    replacements: dict[int, Region | None] = {}
    additions: list[Region] = []
    targeted: list[tuple[Region, dict]] = []
    for edit in edits:
        if edit["action"] == "add":
            additions.append(region_from_dict(edit["region"]))
        else:
            targeted.append((_resolve_target(doc.layout, edit["target"]), edit))
    current = _editable_regions(doc.layout)
    by_identity = {id(r): i for i, r in enumerate(current)}
    for region, edit in targeted:
        idx = by_identity[id(region)]
        base = replacements.get(idx, region)
        action = edit["action"]
        if action == "delete" or base is None:
            replacements[idx] = None
        elif action == "move_resize":
            replacements[idx] = Region(BBox(*edit["bbox"]), base.label, base.score)
        elif action == "relabel":
            replacements[idx] = Region(base.bbox, RegionLabel(edit["label"]), base.score)
    out: list[Region] = []
    for i, region in enumerate(current):
        if i in replacements:
            if replacements[i] is not None:
                out.append(replacements[i])
        else:
            out.append(region)
    out.extend(additions)
    return out


def _samples_from_edits(doc: DocumentRecord, edits: list[dict]) -> list[tuple[np.ndarray, int]]:
    """Labeled training samples implied by an applied edit batch: the
    operator's label paired with the (possibly moved) geometry. Deletions
    teach no class and yield nothing."""
    samples = []
    for edit in edits:
        action = edit["action"]
        if action == "delete":
            continue
        if action == "add":
            region = region_from_dict(edit["region"])
        else:
            base = _resolve_target(doc.layout, edit["target"])
            if action == "move_resize":
                region = Region(BBox(*edit["bbox"]), base.label, base.score)
            else:
                region = Region(base.bbox, RegionLabel(edit["label"]), base.score)
        samples.append(
            (region_features(region, doc.page_width, doc.page_height), CLASS_TO_INDEX[region.label])
        )
    return samples
