"""Similarity transforms, Umeyama alignment and PCA leveling."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometry, InputError, LengthMismatch

# relative singular-value cutoff below which a point set counts as rank deficient
_RANK_TOL = 1e-10


@dataclass(frozen=True)
class PointCloud:
    """Unordered 3D points with optional 8-bit RGB colors.

    ``points`` is an ``(N, 3)`` float64 array; ``colors`` is ``(N, 3)`` uint8
    or ``None``.
    """

    points: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InputError(f"points must have shape (N, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InputError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)
        if self.colors is not None:
            cols = np.asarray(self.colors, dtype=np.uint8)
            if cols.shape != pts.shape:
                raise InputError(f"colors shape {cols.shape} does not match points {pts.shape}")
            object.__setattr__(self, "colors", cols)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class Trajectory:
    """Camera poses ordered by frame id.

    Orientations are unit quaternions ``(w, x, y, z)``, world-from-camera.
    Only the positions take part in metric recovery.
    """

    frame_ids: np.ndarray
    positions: np.ndarray
    quaternions: np.ndarray = field(default=None)

    def __post_init__(self):
        ids = np.asarray(self.frame_ids, dtype=np.int64).reshape(-1)
        pos = np.asarray(self.positions, dtype=np.float64)
        if ids.size < 1:
            raise InputError("a trajectory needs at least one pose")
        if pos.shape != (ids.size, 3):
            raise InputError(f"positions must have shape ({ids.size}, 3), got {pos.shape}")
        if np.any(np.diff(ids) <= 0):
            raise InputError("frame ids must be strictly increasing")
        if not np.all(np.isfinite(pos)):
            raise InputError("positions must be finite")
        if self.quaternions is None:
            quat = np.tile([1.0, 0.0, 0.0, 0.0], (ids.size, 1))
        else:
            quat = np.asarray(self.quaternions, dtype=np.float64)
            if quat.shape != (ids.size, 4):
                raise InputError(f"quaternions must have shape ({ids.size}, 4), got {quat.shape}")
            norms = np.linalg.norm(quat, axis=1)
            if np.any(norms == 0) or not np.all(np.isfinite(norms)):
                raise InputError("quaternions must be finite and non-zero")
            quat = quat / norms[:, None]
        object.__setattr__(self, "frame_ids", ids)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "quaternions", quat)

    def __len__(self):
        return self.frame_ids.size


@dataclass(frozen=True)
class Sim3Transform:
    """``x -> scale * rotation @ x + translation``."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        trans = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise InputError(f"scale must be positive, got {self.scale}")
        if rot.shape != (3, 3) or not is_rotation(rot):
            raise InputError("rotation must be a proper 3x3 rotation matrix")
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls):
        return cls(1.0, np.eye(3), np.zeros(3))

    def apply(self, points):
        pts = np.asarray(points, dtype=np.float64)
        return self.scale * pts @ self.rotation.T + self.translation

    def inverse(self):
        rt = self.rotation.T
        return Sim3Transform(1.0 / self.scale, rt, -(rt @ self.translation) / self.scale)

    def compose(self, other):
        """Return ``self ∘ other`` (``other`` is applied first)."""
        return Sim3Transform(
            self.scale * other.scale,
            self.rotation @ other.rotation,
            self.scale * self.rotation @ other.translation + self.translation,
        )

    def matrix(self):
        h = np.eye(4)
        h[:3, :3] = self.scale * self.rotation
        h[:3, 3] = self.translation
        return h


@dataclass(frozen=True)
class AlignmentReport:
    transform: Sim3Transform
    rmse_m: float
    n_points: int


def is_rotation(rot, tol=1e-9):
    rot = np.asarray(rot, dtype=np.float64)
    return (
        rot.shape == (3, 3)
        and np.allclose(rot @ rot.T, np.eye(3), rtol=0.0, atol=tol)
        and abs(np.linalg.det(rot) - 1.0) <= tol
    )


def _rank(centered):
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[0] == 0:
        return 0
    return int(np.sum(sv > _RANK_TOL * sv[0]))


def umeyama_align(source, target):
    """Closed-form least-squares similarity mapping ``source`` onto ``target``.

    Finds ``(s, R, t)`` minimising ``sum ||target_i - (s R source_i + t)||^2``
    with reflections excluded.

    Parameters
    ----------
    source, target : array_like, shape (n, 3)
        Corresponding points; ``n >= 3`` and the source must not be collinear.

    Returns
    -------
    AlignmentReport
        The transform plus the RMS residual after alignment.
    """
    x = np.asarray(source, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"source has shape {x.shape}, target has shape {y.shape}")
    if x.ndim != 2 or x.shape[1] != 3:
        raise InputError(f"expected (n, 3) point arrays, got {x.shape}")
    n = x.shape[0]
    if n < 3:
        raise DegenerateGeometry(f"fewer than 3 correspondences ({n})")

    mu_x = x.mean(axis=0)
    mu_y = y.mean(axis=0)
    dx = x - mu_x
    dy = y - mu_y
    if _rank(dx) < 2:
        raise DegenerateGeometry("source points are collinear; similarity is under-constrained")

    sigma = dy.T @ dx / n
    u, d, vt = np.linalg.svd(sigma)
    s_mat = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s_mat[2] = -1.0
    rot = (u * s_mat) @ vt
    var_x = np.sum(dx * dx) / n
    scale = float(np.dot(d, s_mat) / var_x)
    trans = mu_y - scale * rot @ mu_x

    transform = Sim3Transform(scale, rot, trans)
    resid = y - transform.apply(x)
    rmse = float(np.sqrt(np.sum(resid * resid) / n))
    return AlignmentReport(transform, rmse, n)


def match_frames(recon, truth):
    """Positions of the frames present in both trajectories, in frame order."""
    common, i_r, i_t = np.intersect1d(recon.frame_ids, truth.frame_ids, return_indices=True)
    return common, recon.positions[i_r], truth.positions[i_t]


def align_trajectories(recon, truth):
    """Sim(3) taking the reconstructed camera centres onto the ground truth ones."""
    common, src, dst = match_frames(recon, truth)
    if common.size < 3:
        raise DegenerateGeometry(f"fewer than 3 correspondences ({common.size} shared frame ids)")
    return umeyama_align(src, dst)


def apply_sim3(cloud, transform):
    if (
        transform.scale == 1.0
        and np.array_equal(transform.rotation, np.eye(3))
        and not np.any(transform.translation)
    ):
        return cloud
    return PointCloud(transform.apply(cloud.points), cloud.colors)


def rotation_between(a, b):
    """Smallest rotation taking unit vector ``a`` onto unit vector ``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    v = np.cross(a, b)
    c = float(np.dot(a, b))
    if c < -1.0 + 1e-12:
        # antiparallel: half turn about any axis orthogonal to a
        axis = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(axis) < 1e-6:
            axis = np.cross(a, [0.0, 1.0, 0.0])
        axis /= np.linalg.norm(axis)
        return 2.0 * np.outer(axis, axis) - np.eye(3)
    vx = np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])
    rot = np.eye(3) + vx + vx @ vx / (1.0 + c)
    # re-orthonormalise to keep det/orthogonality at machine precision
    u, _, vt = np.linalg.svd(rot)
    return u @ vt


def pca_level(cloud, camera_centroid):
    """Rotate ``cloud`` so its least-variance axis points up.

    The sign of the up axis is picked so the cameras end up above the cloud
    centroid. Returns the leveled cloud and the rotation applied about the
    origin.
    """
    pts = cloud.points
    if pts.shape[0] < 3:
        raise DegenerateGeometry("leveling needs at least 3 points")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    if _rank(centered) < 2:
        raise DegenerateGeometry("point cloud is collinear; ground plane is undefined")
    cov = centered.T @ centered / pts.shape[0]
    _, vecs = np.linalg.eigh(cov)
    normal = vecs[:, 0]
    cam = np.asarray(camera_centroid, dtype=np.float64)
    if np.dot(cam - centroid, normal) < 0:
        normal = -normal
    rot = rotation_between(normal, [0.0, 0.0, 1.0])
    return PointCloud(pts @ rot.T, cloud.colors), rot
