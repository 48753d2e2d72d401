"""Trajectory files: metric/arbitrary-frame CSV and geodetic JSON."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import DuplicateFrame, EmptyFrames, IoFailure, MalformedRow, SchemaViolation
from ..geometry import Trajectory

CSV_HEADER = "frame_id,x,y,z,qw,qx,qy,qz"

# WGS84
WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)


def _read_text(path, err=MalformedRow):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError:
        raise err(f"{path}: line 1: file is not UTF-8 text") from None


def read_trajectory_csv(path):
    """Parse ``frame_id,x,y,z,qw,qx,qy,qz`` rows into a :class:`Trajectory`.

    Rows may come in any order; they are sorted by frame id. Quaternions are
    normalised.
    """
    text = _read_text(path)
    lines = text.splitlines()
    if not lines or lines[0].strip() != CSV_HEADER:
        raise MalformedRow(f"{path}: line 1: header must be exactly {CSV_HEADER!r}")
    ids, rows, seen = [], [], {}
    for lineno, fields in enumerate(csv.reader(io.StringIO("\n".join(lines[1:]))), start=2):
        if not fields or all(not f.strip() for f in fields):
            continue
        if len(fields) != 8:
            raise MalformedRow(f"{path}: line {lineno}: expected 8 fields, got {len(fields)}")
        try:
            fid = int(fields[0])
            vals = [float(f) for f in fields[1:]]
        except ValueError:
            raise MalformedRow(f"{path}: line {lineno}: non-numeric field") from None
        if not all(math.isfinite(v) for v in vals):
            raise MalformedRow(f"{path}: line {lineno}: non-finite value")
        if not any(vals[3:]):
            raise MalformedRow(f"{path}: line {lineno}: zero quaternion")
        if fid in seen:
            raise DuplicateFrame(f"{path}: line {lineno}: frame_id {fid} already on line {seen[fid]}")
        seen[fid] = lineno
        ids.append(fid)
        rows.append(vals)
    if not ids:
        raise EmptyFrames(f"{path}: no poses")
    order = np.argsort(ids, kind="stable")
    ids = np.asarray(ids, dtype=np.int64)[order]
    arr = np.asarray(rows, dtype=np.float64)[order]
    return Trajectory(ids, arr[:, :3], arr[:, 3:])


def write_trajectory_csv(traj, path):
    out = [CSV_HEADER]
    for fid, p, q in zip(traj.frame_ids, traj.positions, traj.quaternions):
        out.append(",".join([str(int(fid)), *(repr(float(v)) for v in (*p, *q))]))
    try:
        Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from None


def geodetic_to_ecef(lat_deg, lon_deg, alt_m):
    lat = np.radians(lat_deg)
    lon = np.radians(lon_deg)
    sin_lat = np.sin(lat)
    n = WGS84_A / np.sqrt(1.0 - WGS84_E2 * sin_lat**2)
    x = (n + alt_m) * np.cos(lat) * np.cos(lon)
    y = (n + alt_m) * np.cos(lat) * np.sin(lon)
    z = (n * (1.0 - WGS84_E2) + alt_m) * sin_lat
    return np.stack([x, y, z], axis=-1)


def ecef_to_enu(ecef, lat0_deg, lon0_deg, alt0_m):
    """East-north-up coordinates of ECEF points relative to a geodetic anchor."""
    lat = math.radians(lat0_deg)
    lon = math.radians(lon0_deg)
    origin = geodetic_to_ecef(lat0_deg, lon0_deg, alt0_m)
    sl, cl = math.sin(lat), math.cos(lat)
    so, co = math.sin(lon), math.cos(lon)
    rot = np.array([
        [-so, co, 0.0],
        [-sl * co, -sl * so, cl],
        [cl * co, cl * so, sl],
    ])
    return (np.asarray(ecef, dtype=np.float64) - origin) @ rot.T


def _number(obj, key, where):
    if key not in obj:
        raise SchemaViolation(f"{where}: missing field {key!r}")
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        raise SchemaViolation(f"{where}: field {key!r} must be a finite number")
    return float(val)


def read_trajectory_geodetic(path):
    """Read camera positions exported as WGS84 geodetic coordinates.

    Expected layout::

        {"cameraFrames": [
            {"position": {"latitude": .., "longitude": .., "altitude": ..},
             "rotation": {"x": .., "y": .., "z": ..}},   # optional, degrees
            ...]}

    Positions come back in a local east-north-up frame (metres) anchored at
    the first frame; frame ids are array indices. Rotations are Euler angles
    applied in Z-Y-X order; a missing rotation yields the identity.
    """
    text = _read_text(path, SchemaViolation)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{path}: line {exc.lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(doc, dict) or "cameraFrames" not in doc:
        raise SchemaViolation(f"{path}: missing field 'cameraFrames'")
    frames = doc["cameraFrames"]
    if not isinstance(frames, list):
        raise SchemaViolation(f"{path}: 'cameraFrames' must be an array")
    if not frames:
        raise EmptyFrames(f"{path}: 'cameraFrames' is empty")

    geo = np.empty((len(frames), 3))
    quats = np.tile([1.0, 0.0, 0.0, 0.0], (len(frames), 1))
    for i, frame in enumerate(frames):
        where = f"{path}: cameraFrames[{i}]"
        if not isinstance(frame, dict) or "position" not in frame:
            raise SchemaViolation(f"{where}: missing field 'position'")
        pos = frame["position"]
        if not isinstance(pos, dict):
            raise SchemaViolation(f"{where}: 'position' must be an object")
        lat = _number(pos, "latitude", f"{where}.position")
        lon = _number(pos, "longitude", f"{where}.position")
        alt = _number(pos, "altitude", f"{where}.position")
        if not -90.0 <= lat <= 90.0:
            raise SchemaViolation(f"{where}.position: latitude {lat} outside [-90, 90]")
        if not -180.0 <= lon <= 180.0:
            raise SchemaViolation(f"{where}.position: longitude {lon} outside [-180, 180]")
        geo[i] = lat, lon, alt
        rot = frame.get("rotation")
        if rot is not None:
            if not isinstance(rot, dict):
                raise SchemaViolation(f"{where}: 'rotation' must be an object")
            angles = [_number(rot, k, f"{where}.rotation") for k in ("z", "y", "x")]
            x, y, z, w = Rotation.from_euler("ZYX", angles, degrees=True).as_quat()
            quats[i] = w, x, y, z

    ecef = geodetic_to_ecef(geo[:, 0], geo[:, 1], geo[:, 2])
    enu = ecef_to_enu(ecef, *geo[0])
    return Trajectory(np.arange(len(frames)), enu, quats)


def read_trajectory(path):
    """Dispatch on extension: ``.json`` is geodetic, anything else CSV."""
    if Path(path).suffix.lower() == ".json":
        return read_trajectory_geodetic(path)
    return read_trajectory_csv(path)
