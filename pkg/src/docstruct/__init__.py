"""Document-layout structuring: detection post-processing, table grids,
ordered JSON layouts, evaluation metrics, and correction-driven incremental
learning behind a small service."""

from .geometry import BBox, NmsConfig, Region, RegionLabel, bounding_union, iou, nms
from .layout import (
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
    layout_from_dict,
    layout_to_dict,
    layout_to_json,
    region_combine,
)
from .synth import (
    GenConfig,
    GroundTruthDoc,
    NoiseConfig,
    generate_corpus,
    generate_document,
    simulate_proposals,
)
from .evaluation import (
    DetectionReport,
    EvalConfig,
    fragment_accuracy,
    match_detections,
    merge_reports,
    topk_error,
)
from .classifier import (
    GroupedClassifier,
    MultiTaskTerms,
    asoftmax_loss,
    multitask_loss,
    softmax_loss,
)
from .incremental import (
    Dataset,
    TrainConfig,
    distillation_loss,
    expand_output_layer,
    fit_classifier,
    incremental_train,
)
from .service import DocumentService, PipelineConfig, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "CellPlacement",
    "Dataset",
    "DetectionReport",
    "DocumentLayout",
    "DocumentService",
    "EvalConfig",
    "GenConfig",
    "GroundTruthDoc",
    "GroupedClassifier",
    "LayoutBlock",
    "MultiTaskTerms",
    "NmsConfig",
    "NoiseConfig",
    "PipelineConfig",
    "RcConfig",
    "Region",
    "RegionLabel",
    "TableConfig",
    "TableStructure",
    "TrainConfig",
    "asoftmax_loss",
    "assemble_document",
    "assign_cols",
    "assign_rows",
    "bounding_union",
    "build_table",
    "distillation_loss",
    "expand_output_layer",
    "fit_classifier",
    "fragment_accuracy",
    "generate_corpus",
    "generate_document",
    "incremental_train",
    "iou",
    "layout_from_dict",
    "layout_to_dict",
    "layout_to_json",
    "match_detections",
    "merge_reports",
    "multitask_loss",
    "nms",
    "region_combine",
    "run_pipeline",
    "simulate_proposals",
    "softmax_loss",
    "topk_error",
]
