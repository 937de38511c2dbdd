"""Detection-ensemble post-processing: box fusion, metrics, tuning.

Combines per-image predictions from N detection models (or N augmented
passes of one model) with weighted boxes fusion, NMS, soft-NMS or NMW,
in 2D and 3D; evaluates results with the competition-style mAP; and grid
searches the fusion parameters.  See the ``boxfusion`` CLI for the
file-level workflows.
"""

from .errors import BoxFusionError, DataError, ParameterError
from .evaluation import (
    DEFAULT_THRESHOLDS,
    ClassReport,
    EvalReport,
    GroundTruthBox,
    MatchCounts,
    average_precision,
    match_at_threshold,
    mean_ap,
    precision_at,
)
from .fusion import (
    METHODS,
    RESCALE_VARIANTS,
    Cluster,
    FusionParams,
    PredictionSet,
    ScoredBox,
    default_params,
    fuse,
    fuse_cluster,
    nms,
    nmw,
    nmw_clusters,
    rescale_confidence,
    soft_nms,
    wbf,
    wbf_clusters,
)
from .geometry import Box2D, Box3D, box_from_corners, clip, iou2d, iou3d
from .ingestion import (
    FORMATS,
    DetectionRecord,
    assemble,
    load_detections,
    load_dims,
    load_ground_truth,
    records_to_boxes,
    save_detections,
)
from .tuning import (
    DEFAULT_GRID_CAP,
    GridPoint,
    ParamGrid,
    TuneResult,
    evaluate_point,
    grid_search,
    load_grid,
)

__version__ = "0.1.0"

__all__ = [
    "BoxFusionError",
    "DataError",
    "ParameterError",
    "Box2D",
    "Box3D",
    "box_from_corners",
    "clip",
    "iou2d",
    "iou3d",
    "METHODS",
    "RESCALE_VARIANTS",
    "Cluster",
    "FusionParams",
    "PredictionSet",
    "ScoredBox",
    "default_params",
    "fuse",
    "fuse_cluster",
    "nms",
    "nmw",
    "nmw_clusters",
    "rescale_confidence",
    "soft_nms",
    "wbf",
    "wbf_clusters",
    "DEFAULT_THRESHOLDS",
    "ClassReport",
    "EvalReport",
    "GroundTruthBox",
    "MatchCounts",
    "average_precision",
    "match_at_threshold",
    "mean_ap",
    "precision_at",
    "FORMATS",
    "DetectionRecord",
    "assemble",
    "load_detections",
    "load_dims",
    "load_ground_truth",
    "records_to_boxes",
    "save_detections",
    "DEFAULT_GRID_CAP",
    "GridPoint",
    "ParamGrid",
    "TuneResult",
    "evaluate_point",
    "grid_search",
    "load_grid",
    "__version__",
]
