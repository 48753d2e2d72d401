"""Bird's-eye-view rasters: height/density projection and the canopy mask."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRange, EmptyCloud, InputError


def thread_count():
    """Worker cap from ``CANOPY_THREADS`` (0 or unset = one per CPU)."""
    raw = os.environ.get("CANOPY_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"CANOPY_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise InputError("CANOPY_THREADS must be >= 0")
    return n if n > 0 else (os.cpu_count() or 1)


@dataclass(frozen=True)
class GridSpec:
    """Regular grid; the origin is the world position of the centre of cell (0, 0).

    Columns run along +x, rows along +y.
    """

    width: int
    height: int
    cell_size_m: float
    origin_x_m: float
    origin_y_m: float

    def __post_init__(self):
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        for name in ("cell_size_m", "origin_x_m", "origin_y_m"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if self.width <= 0 or self.height <= 0:
            raise InputError(f"grid must be non-empty, got {self.width}x{self.height}")
        if not self.cell_size_m > 0:
            raise InputError("cell size must be positive")

    @property
    def shape(self):
        return (self.height, self.width)

    def cell_centers(self, rows, cols):
        x = self.origin_x_m + np.asarray(cols) * self.cell_size_m
        y = self.origin_y_m + np.asarray(rows) * self.cell_size_m
        return x, y


@dataclass(frozen=True)
class BevRaster:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != self.spec.shape:
            raise InputError(f"raster shape {vals.shape} does not match grid {self.spec.shape}")
        if np.any(np.isinf(vals)):
            raise InputError("raster values must be finite or NaN")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class CanopyMask:
    spec: GridSpec
    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask, dtype=bool)
        if m.shape != self.spec.shape:
            raise InputError(f"mask shape {m.shape} does not match grid {self.spec.shape}")
        object.__setattr__(self, "mask", m)


def grid_for(points, cell_size_m):
    """Grid covering the XY bounding box of ``points`` plus one cell of padding."""
    lo = points[:, :2].min(axis=0)
    hi = points[:, :2].max(axis=0)
    n = np.floor((hi - lo) / cell_size_m + 0.5).astype(np.int64) + 3
    return GridSpec(n[0], n[1], cell_size_m, lo[0] - cell_size_m, lo[1] - cell_size_m)


def _cell_index(points, spec):
    col = np.floor((points[:, 0] - spec.origin_x_m) / spec.cell_size_m + 0.5).astype(np.int64)
    row = np.floor((points[:, 1] - spec.origin_y_m) / spec.cell_size_m + 0.5).astype(np.int64)
    np.clip(col, 0, spec.width - 1, out=col)
    np.clip(row, 0, spec.height - 1, out=row)
    return row * spec.width + col


def _bin(points, spec):
    flat = _cell_index(points, spec)
    size = spec.width * spec.height
    top = np.full(size, -np.inf)
    np.maximum.at(top, flat, points[:, 2])
    count = np.bincount(flat, minlength=size).astype(np.float64)
    return top, count


def rasterize(cloud, cell_size_m, threads=None):
    """Project a leveled cloud onto a max-height raster and a point-count raster.

    Empty cells are NaN in the height raster and 0 in the density raster.
    Work is sharded over points when ``threads > 1``; max and count merges are
    exact, so the output does not depend on the shard layout.
    """
    if len(cloud) == 0:
        raise EmptyCloud("cannot rasterize an empty point cloud")
    if not cell_size_m > 0:
        raise InputError("cell size must be positive")
    pts = cloud.points
    spec = grid_for(pts, cell_size_m)
    threads = thread_count() if threads is None else max(1, int(threads))
    shards = min(threads, max(1, len(pts) // 100_000))
    if shards == 1:
        top, count = _bin(pts, spec)
    else:
        chunks = np.array_split(pts, shards)
        with ThreadPoolExecutor(max_workers=shards) as pool:
            parts = list(pool.map(lambda c: _bin(c, spec), chunks))
        top = parts[0][0]
        count = parts[0][1]
        for t, c in parts[1:]:
            top = np.maximum(top, t)
            count = count + c
    height = np.where(count > 0, top, np.nan).reshape(spec.shape)
    return BevRaster(spec, height), BevRaster(spec, count.reshape(spec.shape))


def normalize_height(height, ground_percentile=2.0, top_percentile=98.0):
    """Map heights onto [0, 1] between two robust percentiles.

    Returns ``(normalized, z_ground, z_top)``; NaN cells stay NaN.
    """
    vals = height.values
    finite = vals[~np.isnan(vals)]
    if finite.size == 0:
        raise DegenerateRange("height raster has no data")
    if not 0 <= ground_percentile < top_percentile <= 100:
        raise InputError("percentiles must satisfy 0 <= ground < top <= 100")
    z_ground, z_top = np.percentile(finite, [ground_percentile, top_percentile])
    if z_top - z_ground < 1e-6:
        raise DegenerateRange(f"height range {z_top - z_ground:.3g} m is too small (flat scene)")
    norm = np.clip((vals - z_ground) / (z_top - z_ground), 0.0, 1.0)
    return BevRaster(height.spec, norm), float(z_ground), float(z_top)


def canopy_mask(normalized, h_min=0.15):
    vals = normalized.values
    with np.errstate(invalid="ignore"):
        mask = vals > h_min
    return CanopyMask(normalized.spec, mask & ~np.isnan(vals))


def footprint_area(mask):
    return float(np.count_nonzero(mask.mask)) * mask.spec.cell_size_m ** 2
