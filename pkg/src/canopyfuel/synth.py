"""Synthetic stands with known ground truth, for end-to-end testing.

Randomness comes from SplitMix64 (64-bit state, increment
``0x9E3779B97F4A7C15``, mix multipliers ``0xBF58476D1CE4E5B9`` and
``0x94D049BB133111EB``), so a seed pins every output independently of the
numpy version. Uniform doubles use the top 53 bits of each draw; normal
deviates use the Box-Muller cosine/sine pair.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import InputError, IoFailure, PackingInfeasible
from .geometry import PointCloud, Trajectory

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1

# fraction of tree height at which a conical crown starts
CONE_CROWN_BASE = 0.125
DEFAULT_HEIGHTS = {"cone": (16.0, 20.0), "hemisphere": (15.5, 16.0)}
ATTEMPTS_PER_TREE = 2000

GROUND_RGB = (112, 88, 62)
CROWN_RGB = {"cone": (34, 92, 46), "hemisphere": (86, 150, 58)}


class SplitMix64:
    """Counter-based SplitMix64; draw ``k`` mixes ``seed + (k + 1) * gamma``."""

    def __init__(self, seed):
        self.state = int(seed) & _MASK64

    def next_u64(self, n):
        k = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + k * _GAMMA
            z = (z ^ (z >> np.uint64(30))) * _MIX1
            z = (z ^ (z >> np.uint64(27))) * _MIX2
        self.state = (self.state + n * 0x9E3779B97F4A7C15) & _MASK64
        return z ^ (z >> np.uint64(31))

    def uniform(self, n):
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n):
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        theta = 2.0 * np.pi * u[1::2]
        out = np.empty(2 * pairs)
        out[0::2] = r * np.cos(theta)
        out[1::2] = r * np.sin(theta)
        return out[:n]


class Shape(str, enum.Enum):
    CONE = "cone"
    HEMISPHERE = "hemisphere"

    @property
    def species(self):
        return "conifer" if self is Shape.CONE else "broadleaf"


@dataclass(frozen=True)
class SyntheticTree:
    center_x_m: float
    center_y_m: float
    crown_radius_m: float
    height_m: float
    shape: Shape

    @property
    def crown_base_m(self):
        if self.shape is Shape.CONE:
            return CONE_CROWN_BASE * self.height_m
        return self.height_m - self.crown_radius_m

    @property
    def crown_area_m2(self):
        return math.pi * self.crown_radius_m**2

    def surface(self, x, y):
        """Crown surface height at ``(x, y)``; NaN outside the crown."""
        d = np.hypot(x - self.center_x_m, y - self.center_y_m)
        r = self.crown_radius_m
        inside = d <= r
        if self.shape is Shape.CONE:
            z = self.height_m - (self.height_m - self.crown_base_m) * d / r
        else:
            z = self.crown_base_m + np.sqrt(np.clip(r * r - d * d, 0.0, None))
        return np.where(inside, z, np.nan)


@dataclass(frozen=True)
class SyntheticStand:
    """Trees on flat ground at z = 0; the extent is centred on the origin."""

    trees: tuple
    extent_m: tuple
    seed: int
    ground_z: float = 0.0

    @property
    def footprint_m2(self):
        return math.fsum(t.crown_area_m2 for t in self.trees)

    def truth(self):
        return {
            "seed": self.seed,
            "extent_m": list(self.extent_m),
            "n_trees": len(self.trees),
            "footprint_m2": self.footprint_m2,
            "trees": [
                {
                    "center_x_m": t.center_x_m,
                    "center_y_m": t.center_y_m,
                    "crown_radius_m": t.crown_radius_m,
                    "height_m": t.height_m,
                    "shape": t.shape.value,
                    "species": t.shape.species,
                    "crown_area_m2": t.crown_area_m2,
                }
                for t in self.trees
            ],
        }


def generate_stand(
    n_trees,
    extent=(50.0, 50.0),
    radius_range=(1.0, 2.0),
    shape="cone",
    min_spacing_factor=1.5,
    seed=0,
    height_range=None,
):
    """Rejection-sample ``n_trees`` crowns inside ``extent``.

    Centres keep ``min_spacing_factor * (r_i + r_j)`` apart and every crown
    stays inside the extent. ``shape`` is ``"cone"``, ``"hemisphere"`` or
    ``"mixed"`` (coin flip per tree). A single tree is placed at the centre.
    """
    width, depth = (float(v) for v in extent)
    r_lo, r_hi = (float(v) for v in radius_range)
    if n_trees < 0 or width <= 0 or depth <= 0 or not 0 < r_lo <= r_hi:
        raise InputError("invalid stand parameters")
    mixed = shape == "mixed"
    shapes = list(Shape) if mixed else [Shape(shape)]
    if height_range is None:
        heights = {s: DEFAULT_HEIGHTS[s.value] for s in shapes}
    else:
        heights = {s: tuple(float(v) for v in height_range) for s in shapes}
    for s, (h_lo, h_hi) in heights.items():
        if not 0 < h_lo <= h_hi:
            raise InputError("invalid height range")
        if s is Shape.HEMISPHERE and h_lo <= r_hi:
            raise InputError("hemisphere crowns need height above crown radius")

    rng = SplitMix64(seed)
    trees = []
    centers = np.empty((0, 2))
    radii = np.empty(0)
    budget = ATTEMPTS_PER_TREE * max(n_trees, 1)
    while len(trees) < n_trees:
        if budget == 0:
            raise PackingInfeasible(
                f"placed {len(trees)} of {n_trees} trees before exhausting attempts"
            )
        budget -= 1
        u = rng.uniform(5)
        r = r_lo + (r_hi - r_lo) * u[2]
        if width < 2 * r or depth < 2 * r:
            continue
        if n_trees == 1:
            x, y = 0.0, 0.0
        else:
            x = -width / 2 + r + (width - 2 * r) * u[0]
            y = -depth / 2 + r + (depth - 2 * r) * u[1]
        sh = shapes[int(u[4] * len(shapes))] if mixed else shapes[0]
        h_lo, h_hi = heights[sh]
        h = h_lo + (h_hi - h_lo) * u[3]
        if radii.size:
            d = np.hypot(centers[:, 0] - x, centers[:, 1] - y)
            if np.any(d < min_spacing_factor * (radii + r)):
                continue
        trees.append(SyntheticTree(float(x), float(y), float(r), float(h), sh))
        centers = np.vstack([centers, [x, y]])
        radii = np.append(radii, r)
    return SyntheticStand(tuple(trees), (width, depth), int(seed))


def surface_height(stand, x, y):
    """Top surface (max over crowns, ground elsewhere) at points ``(x, y)``."""
    z = np.full(np.shape(x), stand.ground_z, dtype=np.float64)
    owner = np.full(np.shape(x), -1, dtype=np.int64)
    for i, tree in enumerate(stand.trees):
        s = tree.surface(x, y)
        hit = ~np.isnan(s) & (np.nan_to_num(s, nan=-np.inf) > z)
        z = np.where(hit, s, z)
        owner = np.where(hit, i, owner)
    return z, owner


def sample_cloud(stand, points_per_m2=16.0, noise_sigma_m=0.0, seed=0):
    """Sample the stand's top surface on a regular lattice.

    One point per lattice node (crown surface where a crown covers the node,
    ground otherwise) plus one apex point per tree, then isotropic Gaussian
    noise. The point count is fixed by the density and extent alone.
    """
    if points_per_m2 <= 0 or noise_sigma_m < 0:
        raise InputError("density must be positive and noise non-negative")
    width, depth = stand.extent_m
    step = 1.0 / math.sqrt(points_per_m2)
    nx = max(1, int(round(width / step)))
    ny = max(1, int(round(depth / step)))
    # exact spacing, centred on the origin, so the lattice can line up with raster cells
    xs = (np.arange(nx) - (nx - 1) / 2) * step
    ys = (np.arange(ny) - (ny - 1) / 2) * step
    gx, gy = np.meshgrid(xs, ys)
    gx = gx.ravel()
    gy = gy.ravel()
    gz, owner = surface_height(stand, gx, gy)

    apex = np.array([[t.center_x_m, t.center_y_m, t.height_m] for t in stand.trees]).reshape(-1, 3)
    pts = np.vstack([np.stack([gx, gy, gz], axis=1), apex])

    colors = np.tile(np.array(GROUND_RGB, dtype=np.uint8), (pts.shape[0], 1))
    shapes = [t.shape.value for t in stand.trees]
    for i, sh in enumerate(shapes):
        colors[: gx.size][owner == i] = CROWN_RGB[sh]
        colors[gx.size + i] = CROWN_RGB[sh]

    if noise_sigma_m > 0:
        rng = SplitMix64(seed)
        pts = pts + noise_sigma_m * rng.normal(pts.size).reshape(pts.shape)
    return PointCloud(pts, colors)


def _turn(k, n):
    """cos/sin of ``k/n`` of a full turn, exact on quarter turns."""
    if (4 * k) % n == 0:
        return [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)][(4 * k // n) % 4]
    a = 2.0 * math.pi * k / n
    return math.cos(a), math.sin(a)


def look_at(eye, target, up=(0.0, 0.0, 1.0)):
    """World-from-camera rotation for a camera at ``eye`` looking at ``target``.

    Camera axes: x right, y down, z forward.
    """
    f = np.asarray(target, dtype=np.float64) - np.asarray(eye, dtype=np.float64)
    f /= np.linalg.norm(f)
    right = np.cross(f, up)
    if np.linalg.norm(right) < 1e-12:
        right = np.array([1.0, 0.0, 0.0])
    right /= np.linalg.norm(right)
    down = np.cross(f, right)
    return np.stack([right, down, f], axis=1)


def _quat_wxyz(rot):
    x, y, z, w = Rotation.from_matrix(rot).as_quat()
    return np.array([w, x, y, z])


def synth_trajectory(stand, orbit_radius_m=60.0, altitude_m=80.0, n_frames=36):
    """Circular orbit at constant altitude, every camera aimed at the stand centre."""
    if n_frames < 1 or orbit_radius_m < 0:
        raise InputError("need at least one frame and a non-negative orbit radius")
    pos = np.empty((n_frames, 3))
    quats = np.empty((n_frames, 4))
    for k in range(n_frames):
        c, s = _turn(k, n_frames)
        pos[k] = orbit_radius_m * c, orbit_radius_m * s, altitude_m
        quats[k] = _quat_wxyz(look_at(pos[k], (0.0, 0.0, stand.ground_z)))
    return Trajectory(np.arange(n_frames), pos, quats)


def perturb_sim3(trajectory, scale, rotation, translation):
    """Apply ``p -> scale * R p + t`` to positions and ``R`` to orientations."""
    rot = np.asarray(rotation, dtype=np.float64)
    pos = scale * trajectory.positions @ rot.T + np.asarray(translation, dtype=np.float64)
    q = trajectory.quaternions
    cam = Rotation.from_quat(np.column_stack([q[:, 1:], q[:, :1]]))
    xyzw = (Rotation.from_matrix(rot) * cam).as_quat()
    quats = np.column_stack([xyzw[:, 3:], xyzw[:, :3]])
    return Trajectory(trajectory.frame_ids, pos, quats)


def write_truth(stand, path):
    try:
        Path(path).write_text(json.dumps(stand.truth(), indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from None
