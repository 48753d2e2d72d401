import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from canopyfuel.bev import (
    BevRaster,
    CanopyMask,
    GridSpec,
    canopy_mask,
    footprint_area,
    normalize_height,
    rasterize,
)
from canopyfuel.errors import DegenerateRange, EmptyCloud
from canopyfuel.geometry import PointCloud


def _raster(values, cell=1.0):
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[None, :]
    return BevRaster(GridSpec(values.shape[1], values.shape[0], cell, 0.0, 0.0), values)


def test_single_point_padded_grid():
    height, density = rasterize(PointCloud([[0.0, 0.0, 5.0]]), 1.0)
    assert height.spec.shape == (3, 3)
    assert (height.spec.origin_x_m, height.spec.origin_y_m) == (-1.0, -1.0)
    assert height.values[1, 1] == 5.0 and density.values[1, 1] == 1.0
    others = np.ones((3, 3), bool)
    others[1, 1] = False
    assert np.all(np.isnan(height.values[others]))
    assert np.all(density.values[others] == 0)


def test_max_semantics():
    height, density = rasterize(PointCloud([[0.0, 0.0, 3.0], [0.1, 0.1, 7.0]]), 1.0)
    assert np.nanmax(height.values) == 7.0
    assert density.values.max() == 2.0


def test_uniform_plane_density():
    step = 0.5  # 4 points per square metre
    g = np.arange(20) * step + step / 2
    x, y = np.meshgrid(g, g)
    pts = np.column_stack([x.ravel(), y.ravel(), np.zeros(x.size)])
    _, density = rasterize(PointCloud(pts), 0.5)
    assert np.all(density.values[1:-1, 1:-1] == 1.0)
    assert density.values.sum() == 400


def _brute_force(pts, spec):
    h = np.full(spec.shape, np.nan)
    d = np.zeros(spec.shape)
    for x, y, z in pts:
        c = int(math.floor((x - spec.origin_x_m) / spec.cell_size_m + 0.5))
        r = int(math.floor((y - spec.origin_y_m) / spec.cell_size_m + 0.5))
        d[r, c] += 1
        h[r, c] = z if np.isnan(h[r, c]) else max(h[r, c], z)
    return h, d


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 200), cell=st.sampled_from([0.25, 0.5, 1.0, 0.3]),
       seed=st.integers(0, 2**32 - 1))
def test_rasterize_matches_rebinning(n, cell, seed):
    gen = np.random.default_rng(seed)
    pts = gen.uniform(-5, 5, (n, 3))
    height, density = rasterize(PointCloud(pts), cell)
    h, d = _brute_force(pts, height.spec)
    assert np.array_equal(density.values, d)
    assert np.array_equal(height.values, h, equal_nan=True)
    assert density.values.sum() == n
    # padding: no point lands in the outer ring
    assert density.values[0].sum() == density.values[-1].sum() == 0
    assert density.values[:, 0].sum() == density.values[:, -1].sum() == 0


def test_sharded_equals_sequential():
    pts = np.random.default_rng(0).uniform(-50, 50, (450_000, 3))
    seq = rasterize(PointCloud(pts), 0.5, threads=1)
    par = rasterize(PointCloud(pts), 0.5, threads=4)
    for a, b in zip(seq, par):
        assert np.array_equal(a.values, b.values, equal_nan=True)


def test_empty_cloud():
    with pytest.raises(EmptyCloud):
        rasterize(PointCloud(np.empty((0, 3))), 0.5)


def test_normalize_linear_map():
    norm, lo, hi = normalize_height(_raster([0.0, 5.0, 10.0]), 0, 100)
    assert norm.values.tolist() == [[0.0, 0.5, 1.0]]
    assert (lo, hi) == (0.0, 10.0)


def test_normalize_constant_is_degenerate():
    with pytest.raises(DegenerateRange):
        normalize_height(_raster(np.full((4, 4), 3.0)))


def test_normalize_keeps_nan():
    norm, _, _ = normalize_height(_raster([np.nan, 0.0, 1.0, 2.0]), 0, 100)
    assert np.isnan(norm.values[0, 0])


def test_normalize_resists_low_outliers():
    gen = np.random.default_rng(9)
    clean = np.concatenate([np.zeros(600), gen.uniform(5.0, 20.0, 400)])
    dirty = clean.copy()
    dirty[gen.choice(600, 20, replace=False)] = -50.0  # 2% of cells
    ref, g_ref, _ = normalize_height(_raster(clean.reshape(25, 40)))
    got, g_dirty, _ = normalize_height(_raster(dirty.reshape(25, 40)))
    assert abs(g_dirty - g_ref) < 1.0
    assert np.all(got.values.reshape(-1)[dirty == -50.0] == 0.0)
    canopy = clean > 0
    assert np.abs(got.values.reshape(-1)[canopy] - ref.values.reshape(-1)[canopy]).max() < 0.05


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=60))
def test_normalize_range_and_monotone(vals):
    vals = np.array(vals)
    if np.ptp(vals) < 1e-3:
        return
    norm, _, _ = normalize_height(_raster(vals))
    out = norm.values[0]
    assert np.all((out >= 0) & (out <= 1))
    order = np.argsort(vals, kind="stable")
    assert np.all(np.diff(out[order]) >= 0)


def test_mask_is_strict_and_drops_nan():
    mask = canopy_mask(_raster([0.15, 0.16, np.nan, 0.0, 1.0]), 0.15)
    assert mask.mask.tolist() == [[False, True, False, False, True]]


@settings(max_examples=50, deadline=None)
@given(vals=st.lists(st.floats(0, 1), min_size=1, max_size=50),
       k=st.floats(0.1, 10), h_min=st.floats(0.01, 0.99))
def test_mask_invariant_under_affine_fixing_threshold(vals, k, h_min):
    vals = np.array(vals)
    moved = h_min + k * (vals - h_min)
    a = canopy_mask(_raster(vals), h_min).mask
    b = canopy_mask(_raster(moved), h_min).mask
    # only values numerically on the threshold may flip
    diff = a != b
    assert np.all(np.abs(vals[diff[0]] - h_min) < 1e-12)


def test_footprint_area():
    spec = GridSpec(10, 10, 0.5, 0, 0)
    assert footprint_area(CanopyMask(spec, np.ones((10, 10), bool))) == 25.0
    assert footprint_area(CanopyMask(spec, np.zeros((10, 10), bool))) == 0.0


def _disc_area(cell, radius=10.0):
    n = int(2 * radius / cell) + 4
    spec = GridSpec(n, n, cell, -n // 2 * cell, -n // 2 * cell)
    x, y = spec.cell_centers(*np.indices(spec.shape))
    return footprint_area(CanopyMask(spec, np.hypot(x, y) <= radius))


def test_disc_area_within_two_percent():
    assert abs(_disc_area(0.25) - math.pi * 100) / (math.pi * 100) < 0.02


def test_area_stable_under_refinement():
    coarse, fine = _disc_area(0.25), _disc_area(0.125)
    assert abs(coarse - fine) / fine < 0.02
