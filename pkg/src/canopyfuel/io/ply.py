"""PLY point cloud reading and writing.

Reads ``ascii 1.0`` and ``binary_little_endian 1.0`` files. Only the vertex
element is returned; scalar elements declared before it are skipped and
anything after it is ignored. Writes ``binary_little_endian`` with float32
coordinates and uchar colors.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import EmptyCloud, IoFailure, MalformedHeader, TruncatedBody
from ..geometry import PointCloud

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
_FORMATS = ("ascii", "binary_little_endian")


class _Element:
    def __init__(self, name, count, line):
        self.name = name
        self.count = count
        self.line = line
        self.props = []  # (name, numpy code)
        self.has_list = False

    def dtype(self):
        return np.dtype([(name, "<" + code) for name, code in self.props])


def _parse_header(data):
    if not data.startswith(b"ply"):
        raise MalformedHeader("line 1: missing 'ply' magic")
    end = data.find(b"end_header")
    if end < 0:
        raise MalformedHeader("no 'end_header' line found")
    nl = data.find(b"\n", end)
    body_offset = len(data) if nl < 0 else nl + 1
    try:
        text = data[:end].decode("ascii")
    except UnicodeDecodeError as exc:
        raise MalformedHeader(f"byte {exc.start}: header is not ASCII") from None

    fmt = None
    elements = []
    for lineno, raw in enumerate(text.splitlines()[1:], start=2):
        words = raw.split()
        if not words or words[0] in ("comment", "obj_info"):
            continue
        key = words[0]
        if key == "format":
            if len(words) != 3 or words[2] != "1.0":
                raise MalformedHeader(f"line {lineno}: bad format line {raw!r}")
            if words[1] not in _FORMATS:
                raise MalformedHeader(f"line {lineno}: unsupported format {words[1]!r}")
            fmt = words[1]
        elif key == "element":
            if len(words) != 3:
                raise MalformedHeader(f"line {lineno}: bad element line {raw!r}")
            try:
                count = int(words[2])
            except ValueError:
                raise MalformedHeader(f"line {lineno}: bad element count {words[2]!r}") from None
            if count < 0:
                raise MalformedHeader(f"line {lineno}: negative element count")
            elements.append(_Element(words[1], count, lineno))
        elif key == "property":
            if not elements:
                raise MalformedHeader(f"line {lineno}: property before any element")
            if len(words) >= 2 and words[1] == "list":
                elements[-1].has_list = True
                continue
            if len(words) != 3 or words[1] not in _PLY_TYPES:
                raise MalformedHeader(f"line {lineno}: bad property line {raw!r}")
            elements[-1].props.append((words[2], _PLY_TYPES[words[1]]))
        else:
            raise MalformedHeader(f"line {lineno}: unknown header keyword {key!r}")
    if fmt is None:
        raise MalformedHeader("header has no format line")
    return fmt, elements, body_offset


def _find_vertex(elements):
    for idx, el in enumerate(elements):
        if el.name == "vertex":
            break
    else:
        raise MalformedHeader("no 'vertex' element declared")
    names = {name: code for name, code in el.props}
    for axis in "xyz":
        if axis not in names:
            raise MalformedHeader(f"line {el.line}: vertex element lacks property {axis!r}")
        if names[axis] not in ("f4", "f8"):
            raise MalformedHeader(f"line {el.line}: vertex {axis!r} must be float or double")
    if el.has_list:
        raise MalformedHeader(f"line {el.line}: list properties on vertices are not supported")
    for prior in elements[:idx]:
        if prior.has_list:
            raise MalformedHeader(
                f"line {prior.line}: cannot skip element {prior.name!r} with list properties"
            )
    return idx, el


def _colors_from(table, names):
    if all(c in names and names[c] == "u1" for c in ("red", "green", "blue")):
        return np.stack([table["red"], table["green"], table["blue"]], axis=1).astype(np.uint8)
    return None


def _read_binary(data, offset, elements, idx, vertex):
    for prior in elements[:idx]:
        offset += prior.count * prior.dtype().itemsize
    dtype = vertex.dtype()
    need = vertex.count * dtype.itemsize
    have = len(data) - offset
    if have < need:
        got = max(have, 0) // dtype.itemsize
        raise TruncatedBody(
            f"byte {len(data)}: expected {vertex.count} vertices of {dtype.itemsize} bytes "
            f"starting at byte {offset}, file holds {got}"
        )
    return np.frombuffer(data, dtype=dtype, count=vertex.count, offset=offset)


def _read_ascii(data, offset, header_lines, elements, idx, vertex):
    try:
        lines = data[offset:].decode("ascii").splitlines()
    except UnicodeDecodeError as exc:
        raise TruncatedBody(f"byte {offset + exc.start}: non-ASCII data in ascii body") from None
    # header_lines counts the header including end_header
    skip = sum(el.count for el in elements[:idx])
    rows = lines[skip:skip + vertex.count]
    first_line = header_lines + skip + 1
    if len(rows) < vertex.count:
        raise TruncatedBody(
            f"line {header_lines + len(lines) + 1}: expected {vertex.count} vertices, "
            f"found {max(len(rows), 0)}"
        )
    nprops = len(vertex.props)
    table = np.empty(vertex.count, dtype=vertex.dtype())
    for i, row in enumerate(rows):
        words = row.split()
        if len(words) < nprops:
            raise TruncatedBody(f"line {first_line + i}: expected {nprops} values, got {len(words)}")
        try:
            table[i] = tuple(float(w) for w in words[:nprops])
        except (ValueError, OverflowError):
            raise TruncatedBody(f"line {first_line + i}: unparsable vertex {row!r}") from None
    return table


def read_ply(path):
    """Load the vertices of a PLY file as a :class:`PointCloud`."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from None
    fmt, elements, body = _parse_header(data)
    idx, vertex = _find_vertex(elements)
    if fmt == "binary_little_endian":
        table = _read_binary(data, body, elements, idx, vertex)
    else:
        header_lines = data[:body].count(b"\n")
        table = _read_ascii(data, body, header_lines, elements, idx, vertex)
    pts = np.stack([table["x"], table["y"], table["z"]], axis=1).astype(np.float64)
    if not np.all(np.isfinite(pts)):
        bad = int(np.argmax(~np.all(np.isfinite(pts), axis=1)))
        raise TruncatedBody(f"vertex {bad}: non-finite coordinate")
    return PointCloud(pts, _colors_from(table, dict(vertex.props)))


def write_ply(cloud, path):
    if len(cloud) == 0:
        raise EmptyCloud("refusing to write an empty point cloud")
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    props = ["property float x", "property float y", "property float z"]
    if cloud.colors is not None:
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
        props += ["property uchar red", "property uchar green", "property uchar blue"]
    table = np.empty(len(cloud), dtype=fields)
    for i, axis in enumerate("xyz"):
        table[axis] = cloud.points[:, i]
    if cloud.colors is not None:
        for i, ch in enumerate(("red", "green", "blue")):
            table[ch] = cloud.colors[:, i]
    header = "\n".join(
        ["ply", "format binary_little_endian 1.0", f"element vertex {len(cloud)}", *props,
         "end_header"]
    ) + "\n"
    try:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(table.tobytes())
    except OSError as exc:
        raise IoFailure(f"{path}: {exc.strerror or exc}") from None
