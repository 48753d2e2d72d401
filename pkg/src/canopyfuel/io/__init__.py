"""File formats: PLY clouds, trajectories, configuration and raster containers."""
from .config import PipelineConfig, read_config
from .ply import read_ply, write_ply
from .trajectory import (
    read_trajectory,
    read_trajectory_csv,
    read_trajectory_geodetic,
    write_trajectory_csv,
)

__all__ = [
    "PipelineConfig",
    "read_config",
    "read_ply",
    "write_ply",
    "read_trajectory",
    "read_trajectory_csv",
    "read_trajectory_geodetic",
    "write_trajectory_csv",
]
