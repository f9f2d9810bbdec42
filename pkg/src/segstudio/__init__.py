"""segstudio: self-hosted medical image segmentation service.

DICOM series ingest, contour rasterization, per-ROI DICE and XOR
discrepancy analysis, versioned mask storage with brush editing, on-demand
model inference with auto-suspending executors, and active-learning export
bundles — as a library, an HTTP service, and a CLI.
"""

__version__ = "0.1.0"
SERVICE_NAME = "segstudio"

from .geometry import (VolumeGrid, VoxelIndex, WorldPoint, identity_grid,
                       nearest_voxel, voxel_to_world, voxel_volume, world_to_voxel)
from .mask import (ROI, Provenance, RleRuns, SegmentationSet, VoxelMask,
                   apply_brush, mask_stats, new_mask, rle_decode, rle_encode)
from .analysis import EvaluationReport, dice, discrepancy_map, evaluate
from .contours import Contour, ContourSet, parse_structure_set, rasterize_contours
from .dicomio import ImageSeries, parse_series
from .phantom import Box, PhantomSpec, Sphere, generate_phantom
from .store import Store
from .orchestrator import Orchestrator

__all__ = [
    "VolumeGrid", "VoxelIndex", "WorldPoint", "identity_grid", "nearest_voxel",
    "voxel_to_world", "voxel_volume", "world_to_voxel",
    "ROI", "Provenance", "RleRuns", "SegmentationSet", "VoxelMask",
    "apply_brush", "mask_stats", "new_mask", "rle_decode", "rle_encode",
    "EvaluationReport", "dice", "discrepancy_map", "evaluate",
    "Contour", "ContourSet", "parse_structure_set", "rasterize_contours",
    "ImageSeries", "parse_series",
    "Box", "PhantomSpec", "Sphere", "generate_phantom",
    "Store", "Orchestrator",
]
