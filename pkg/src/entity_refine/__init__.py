"""Training-free refinement of multi-level promptable-segmenter masks into a
non-overlapping entity-level segmentation map."""

from .config import PipelineConfig
from .masks import (BinaryMask, Box, EntityMap, MaskError, ScoredMask,
                    centroid, connected_components, decode, encode, intersect,
                    iou, nms, subtract, union)
from .pipeline import ABLATIONS, BASELINE, FULL, PipelineSession, Variant, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "PipelineConfig", "BinaryMask", "Box", "EntityMap", "MaskError",
    "ScoredMask", "centroid", "connected_components", "decode", "encode",
    "intersect", "iou", "nms", "subtract", "union",
    "ABLATIONS", "BASELINE", "FULL", "PipelineSession", "Variant",
    "run_pipeline", "__version__",
]
