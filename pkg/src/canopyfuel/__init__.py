"""Metric forest inventory from up-to-scale reconstructions.

Recovers metric scale by aligning reconstructed camera centres with ground
truth poses, projects the leveled cloud to a bird's-eye height raster,
delineates individual crowns and turns crown areas into a fuel-load estimate.
"""
from .bev import BevRaster, CanopyMask, GridSpec, canopy_mask, footprint_area, normalize_height, rasterize
from .geometry import (
    AlignmentReport,
    PointCloud,
    Sim3Transform,
    Trajectory,
    align_trajectories,
    apply_sim3,
    pca_level,
    umeyama_align,
)
from .inventory import Species, alpha_geo, classify_species, effective_lai, fuel_load
from .segmentation import LabelRaster, correct_areas, edt, find_markers, segment, watershed

__version__ = "0.1.0"

__all__ = [
    "AlignmentReport",
    "BevRaster",
    "CanopyMask",
    "GridSpec",
    "LabelRaster",
    "PointCloud",
    "Sim3Transform",
    "Species",
    "Trajectory",
    "align_trajectories",
    "alpha_geo",
    "apply_sim3",
    "canopy_mask",
    "classify_species",
    "correct_areas",
    "edt",
    "effective_lai",
    "find_markers",
    "footprint_area",
    "fuel_load",
    "normalize_height",
    "pca_level",
    "rasterize",
    "segment",
    "umeyama_align",
    "watershed",
]
