"""Binary raster containers (BEVR1 / MASK1 / LBLR1) and PGM previews.

All three share one ASCII header line::

    <MAGIC> <width> <height> <cell_size_m> <origin_x_m> <origin_y_m>\\n

followed by ``width * height`` row-major cells: little-endian float32 for
``BEVR1`` (NaN = no data), one byte 0/1 for ``MASK1`` and little-endian
uint32 for ``LBLR1``. Row 0 is the southernmost row.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from ..bev import BevRaster, CanopyMask, GridSpec
from ..errors import BadMagic, IoFailure, TruncatedBody
from ..segmentation import LabelRaster

_KINDS = {
    "BEVR1": np.dtype("<f4"),
    "MASK1": np.dtype("u1"),
    "LBLR1": np.dtype("<u4"),
}
_MAX_HEADER = 256


def _header(magic, spec):
    return (
        f"{magic} {spec.width} {spec.height} {spec.cell_size_m!r} "
        f"{spec.origin_x_m!r} {spec.origin_y_m!r}\n"
    ).encode("ascii")


def _write(path, magic, spec, values):
    try:
        with open(path, "wb") as fh:
            fh.write(_header(magic, spec))
            fh.write(np.ascontiguousarray(values, dtype=_KINDS[magic]).tobytes())
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from None


def _read(path, magic):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from None
    nl = data.find(b"\n", 0, _MAX_HEADER)
    if nl < 0:
        raise BadMagic(f"{path}: byte 0: no {magic} header line")
    try:
        words = data[:nl].decode("ascii").split()
    except UnicodeDecodeError:
        raise BadMagic(f"{path}: byte 0: header is not ASCII") from None
    if not words or words[0] != magic:
        found = words[0] if words else ""
        raise BadMagic(f"{path}: byte 0: expected magic {magic!r}, found {found!r}")
    if len(words) != 6:
        raise BadMagic(f"{path}: header must have 6 fields, found {len(words)}")
    try:
        width, height = int(words[1]), int(words[2])
        cell, ox, oy = (float(w) for w in words[3:])
    except ValueError:
        raise BadMagic(f"{path}: unparsable header {data[:nl]!r}") from None
    if width <= 0 or height <= 0 or not (cell > 0 and math.isfinite(cell)):
        raise BadMagic(f"{path}: invalid grid dimensions in header")
    spec = GridSpec(width, height, cell, ox, oy)
    dtype = _KINDS[magic]
    need = width * height * dtype.itemsize
    body = data[nl + 1:]
    if len(body) != need:
        raise TruncatedBody(
            f"{path}: byte {nl + 1 + len(body)}: expected {need} body bytes, found {len(body)}"
        )
    grid = np.frombuffer(body, dtype=dtype).reshape(height, width)
    return spec, grid


def write_bev(raster, path):
    _write(path, "BEVR1", raster.spec, raster.values)


def read_bev(path):
    spec, grid = _read(path, "BEVR1")
    return BevRaster(spec, grid.astype(np.float64))


def write_mask(mask, path):
    _write(path, "MASK1", mask.spec, mask.mask)


def read_mask(path):
    spec, grid = _read(path, "MASK1")
    if np.any(grid > 1):
        raise BadMagic(f"{path}: mask cells must be 0 or 1")
    return CanopyMask(spec, grid.astype(bool))


def write_labels(labels, path):
    _write(path, "LBLR1", labels.spec, labels.labels)


def read_labels(path):
    spec, grid = _read(path, "LBLR1")
    return LabelRaster(spec, grid.astype(np.int64))


def _write_pgm(path, img):
    # image rows go top-down, so flip to put north up
    img = np.ascontiguousarray(img[::-1], dtype=np.uint8)
    h, w = img.shape
    try:
        with open(path, "wb") as fh:
            fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
            fh.write(img.tobytes())
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from None


def write_height_preview(normalized, path):
    vals = np.nan_to_num(normalized.values, nan=0.0)
    _write_pgm(path, np.round(np.clip(vals, 0.0, 1.0) * 255.0))


def write_label_preview(labels, path):
    lab = labels.labels
    img = np.where(lab > 0, 64 + (lab * 37) % 192, 0)
    _write_pgm(path, img)
