"""Individual tree delineation on the normalized height raster.

Two stages: crown peaks ("tree cores") are isolated with an adaptive
threshold ``mean + alpha * std`` over the canopy, then markers placed at the
distance-transform maxima of those cores are flooded over the canopy mask.
Connectivity is 8-neighbour throughout and every tie is broken by insertion
order or row-major position, so results are reproducible bit for bit.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .bev import BevRaster, CanopyMask
from .errors import EmptyMask, InputError, MarkerOutsideCanopy, NoLabels, NoMarkers

_EIGHT = np.ones((3, 3), dtype=bool)
_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


@dataclass(frozen=True)
class CoreStats:
    mu_h: float
    sigma_h: float
    t_core: float


@dataclass(frozen=True)
class Marker:
    row: int
    col: int
    label: int
    edt_value: float


@dataclass(frozen=True)
class LabelRaster:
    spec: object
    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.shape != self.spec.shape:
            raise InputError(f"label shape {lab.shape} does not match grid {self.spec.shape}")
        if lab.size and lab.min() < 0:
            raise InputError("labels must be non-negative")
        object.__setattr__(self, "labels", lab.astype(np.int64, copy=False))

    @property
    def n_labels(self):
        return int(self.labels.max()) if self.labels.size else 0


def core_stats(normalized, mask, alpha=0.5):
    vals = normalized.values[mask.mask]
    if vals.size == 0:
        raise EmptyMask("no canopy cells to compute height statistics over")
    mu = float(np.mean(vals))
    sigma = float(np.std(vals))
    return CoreStats(mu, sigma, mu + alpha * sigma)


def tree_core_mask(normalized, mask, stats):
    with np.errstate(invalid="ignore"):
        core = mask.mask & (normalized.values > stats.t_core)
    return CanopyMask(mask.spec, core)


def edt(mask):
    """Exact Euclidean distance (cell units) from each true cell to the nearest false one.

    The area outside the grid counts as false, so border cells are at most 1.
    """
    padded = np.pad(mask.mask, 1, constant_values=False)
    dist = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    return BevRaster(mask.spec, dist)


def _plateau_maxima(values, core):
    """Cells representing each 8-connected local maximum plateau of ``values`` in ``core``."""
    peak = ndimage.maximum_filter(values, footprint=_EIGHT, mode="constant", cval=-np.inf)
    cand = core & (values >= peak)
    width = values.shape[1]
    out = []
    for v in np.unique(values[cand]):
        lab, _ = ndimage.label(values == v, structure=_EIGHT)
        hits = np.unique(lab[cand & (values == v)])
        hits = hits[hits > 0]
        # a plateau touching a higher neighbour is a shoulder, not a peak
        whole = np.asarray(ndimage.minimum(cand, lab, hits), dtype=bool).reshape(-1)
        boxes = ndimage.find_objects(lab)
        for comp in hits[whole]:
            box = boxes[comp - 1]
            rows, cols = np.nonzero(lab[box] == comp)
            rows = rows + box[0].start
            cols = cols + box[1].start
            if rows.size == 1:
                out.append((int(rows[0]), int(cols[0])))
                continue
            cy, cx = rows.mean(), cols.mean()
            d2 = (rows - cy) ** 2 + (cols - cx) ** 2
            # nonzero() is row-major, so argmin picks the row-major winner on ties
            best = int(np.argmin(d2))
            out.append((int(rows[best]), int(cols[best])))
    out.sort(key=lambda rc: rc[0] * width + rc[1])
    return out


def find_markers(edt_map, core, min_peak_distance_cells):
    """Greedy non-maximum suppression over the distance-transform peaks.

    Peaks are visited by decreasing distance value (row-major on ties) and kept
    when at least ``min_peak_distance_cells`` away from every kept peak.
    Labels are 1..K in acceptance order.
    """
    if not core.mask.any():
        raise NoMarkers("tree-core mask is empty; no trees detected")
    values = edt_map.values
    peaks = _plateau_maxima(values, core.mask)
    # stable sort keeps row-major order among equal distance values
    peaks.sort(key=lambda rc: -values[rc])
    accepted = []
    kept = np.empty((0, 2))
    min_d2 = float(min_peak_distance_cells) ** 2
    for r, c in peaks:
        if kept.shape[0]:
            d2 = (kept[:, 0] - r) ** 2 + (kept[:, 1] - c) ** 2
            if np.any(d2 < min_d2):
                continue
        accepted.append(Marker(r, c, len(accepted) + 1, float(values[r, c])))
        kept = np.vstack([kept, [r, c]])
    return accepted


def watershed(normalized, canopy, markers):
    """Marker-controlled priority flood over the negated height surface.

    Taller cells flood first; equal heights flood in insertion order. A cell
    takes the label of the neighbour that first queued it, and only canopy
    cells are ever labeled.
    """
    if not markers:
        raise NoMarkers("watershed needs at least one marker")
    mask = canopy.mask
    h, w = mask.shape
    height = np.nan_to_num(normalized.values, nan=0.0)
    labels = np.zeros((h, w), dtype=np.int64)
    queued = np.zeros((h, w), dtype=bool)
    heap = []
    seq = 0
    for m in markers:
        if not (0 <= m.row < h and 0 <= m.col < w) or not mask[m.row, m.col]:
            raise MarkerOutsideCanopy(f"marker {m.label} at ({m.row}, {m.col}) is outside the canopy")
        if queued[m.row, m.col]:
            raise InputError(f"marker {m.label} duplicates another marker's cell")
        labels[m.row, m.col] = m.label
        queued[m.row, m.col] = True
        heapq.heappush(heap, (-height[m.row, m.col], seq, m.row, m.col, m.label))
        seq += 1

    hl = height.tolist()
    ml = mask.tolist()
    ql = queued.tolist()
    ll = labels.tolist()
    while heap:
        _, _, r, c, lab = heapq.heappop(heap)
        ll[r][c] = lab
        for dr, dc in _OFFSETS:
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and ml[rr][cc] and not ql[rr][cc]:
                ql[rr][cc] = True
                heapq.heappush(heap, (-hl[rr][cc], seq, rr, cc, lab))
                seq += 1
    return LabelRaster(canopy.spec, np.array(ll, dtype=np.int64).reshape(h, w))


def correct_areas(labels, footprint_m2, cell_size_m):
    """Per-label raw areas and areas rescaled to sum to ``footprint_m2``.

    Returns a list of ``(label, raw_area_m2, corrected_area_m2)`` in label
    order, skipping ids with no cells.
    """
    counts = np.bincount(labels.labels.ravel())
    ids = np.flatnonzero(counts)
    ids = ids[ids > 0]
    if ids.size == 0:
        raise NoLabels("label raster has no labeled cells")
    raw = counts[ids] * cell_size_m ** 2
    total = math.fsum(raw.tolist())
    factor = footprint_m2 / total
    return [(int(i), float(a), float(a * factor)) for i, a in zip(ids, raw)]


def segment(normalized, canopy, alpha=0.5, min_peak_distance_m=2.0):
    """Run the whole delineation; returns ``(labels, stats, markers)``."""
    stats = core_stats(normalized, canopy, alpha)
    core = tree_core_mask(normalized, canopy, stats)
    dist = edt(core)
    min_cells = math.ceil(round(min_peak_distance_m / normalized.spec.cell_size_m, 9))
    markers = find_markers(dist, core, min_cells)
    return watershed(normalized, canopy, markers), stats, markers
