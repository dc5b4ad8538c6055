"""Readers and writers for point clouds, labels, descriptors and poses.

Formats
-------
* PLY (ascii, binary little or big endian); x, y, z as float or double and
  an optional integer vertex property ``label``.
* KITTI velodyne scans: little-endian float32 (x, y, z, intensity) records.
* KITTI label files: one little-endian uint32 per point, semantic class in
  the low 16 bits.
* Descriptors: three little-endian uint32 (magic, count, dim) then
  row-major little-endian float32.
* Poses: 12 (KITTI 3x4) or 16 (4x4) whitespace-separated numbers.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .core import RigidTransform, SemanticPointCloud
from .errors import InputError, LengthMismatch, MalformedFile

DESCRIPTOR_MAGIC = 0x53444753  # b"SGDS" read as little-endian uint32
_DESC_HEADER = np.dtype([("magic", "<u4"), ("count", "<u4"), ("dim", "<u4")])

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}
_PLY_FORMATS = {"ascii": None, "binary_little_endian": "<", "binary_big_endian": ">"}

PathLike = str | os.PathLike


def _read_bytes(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc


# --- PLY -------------------------------------------------------------------

def _parse_ply_header(raw: bytes):
    if not raw.startswith(b"ply"):
        raise MalformedFile("missing 'ply' magic", 0)
    pos = 0
    fmt = None
    elements: list[tuple[str, int, list[tuple[str, str]]]] = []
    while True:
        end = raw.find(b"\n", pos)
        if end < 0:
            raise MalformedFile("header has no end_header line", pos)
        line = raw[pos:end].decode("ascii", errors="replace").strip()
        line_start, pos = pos, end + 1
        words = line.split()
        if not words or words[0] in ("ply", "comment", "obj_info"):
            continue
        if words[0] == "end_header":
            break
        if words[0] == "format":
            if len(words) != 3 or words[1] not in _PLY_FORMATS:
                raise MalformedFile(f"unsupported format line {line!r}", line_start)
            fmt = words[1]
        elif words[0] == "element":
            if len(words) != 3 or not words[2].isdigit():
                raise MalformedFile(f"bad element line {line!r}", line_start)
            elements.append((words[1], int(words[2]), []))
        elif words[0] == "property":
            if not elements:
                raise MalformedFile("property before any element", line_start)
            if len(words) >= 2 and words[1] == "list":
                if len(words) != 5 or words[2] not in _PLY_TYPES or words[3] not in _PLY_TYPES:
                    raise MalformedFile(f"bad list property {line!r}", line_start)
                elements[-1][2].append((words[4], f"list:{_PLY_TYPES[words[2]]}:{_PLY_TYPES[words[3]]}"))
            else:
                if len(words) != 3 or words[1] not in _PLY_TYPES:
                    raise MalformedFile(f"bad property line {line!r}", line_start)
                elements[-1][2].append((words[2], _PLY_TYPES[words[1]]))
        else:
            raise MalformedFile(f"unknown header keyword {words[0]!r}", line_start)
    if fmt is None:
        raise MalformedFile("header has no format line", 0)
    return fmt, elements, pos


def _skip_binary_element(raw, pos, count, props, order):
    """Byte position after ``count`` records of an element that precedes the vertices."""
    for _ in range(count):
        for _name, kind in props:
            if kind.startswith("list:"):
                _, ctype, itype = kind.split(":")
                cdt = np.dtype(order + ctype)
                if pos + cdt.itemsize > len(raw):
                    raise MalformedFile("truncated list property", pos)
                n = int(np.frombuffer(raw, cdt, 1, pos)[0])
                pos += cdt.itemsize + n * np.dtype(itype).itemsize
            else:
                pos += np.dtype(kind).itemsize
    return pos


def read_ply(path: PathLike) -> tuple[NDArray[np.float64], NDArray[np.int64] | None]:
    """Vertex coordinates as float64 and the ``label`` property if present."""
    raw = _read_bytes(path)
    fmt, elements, pos = _parse_ply_header(raw)
    names = [e[0] for e in elements]
    if "vertex" not in names:
        raise MalformedFile("no vertex element", 0)
    vi = names.index("vertex")
    _, count, props = elements[vi]
    pnames = [p[0] for p in props]
    for axis in ("x", "y", "z"):
        if axis not in pnames:
            raise MalformedFile(f"vertex element lacks property {axis!r}", 0)
    if any(kind.startswith("list:") for _, kind in props):
        raise MalformedFile("list properties on vertices are not supported", 0)
    if "label" in pnames and np.dtype(props[pnames.index("label")][1]).kind not in "iu":
        raise MalformedFile("label property must have an integer type", 0)

    if fmt == "ascii":
        lines = raw[pos:].split(b"\n")
        # every element before the vertices occupies one line per record
        skip = sum(e[1] for e in elements[:vi])
        offset = pos + sum(len(s) + 1 for s in lines[:skip])
        rows = np.empty((count, len(props)), dtype=np.float64)
        for n in range(count):
            line = lines[skip + n] if skip + n < len(lines) else b""
            try:
                vals = [float(tok) for tok in line.split()]
            except ValueError:
                vals = []
            if len(vals) != len(props):
                raise MalformedFile(f"vertex {n}: expected {len(props)} values", offset)
            rows[n] = vals
            offset += len(line) + 1
        columns = {name: rows[:, j] for j, name in enumerate(pnames)}
    else:
        order = _PLY_FORMATS[fmt]
        for name, c, eprops in elements[:vi]:
            pos = _skip_binary_element(raw, pos, c, eprops, order)
        dtype = np.dtype([(name, order + kind) for name, kind in props])
        need = pos + count * dtype.itemsize
        if need > len(raw):
            raise MalformedFile(f"vertex data truncated: need {need} bytes, have {len(raw)}", len(raw))
        data = np.frombuffer(raw, dtype, count, pos)
        columns = {name: data[name] for name in pnames}

    points = np.column_stack([columns[a].astype(np.float64) for a in ("x", "y", "z")])
    labels = None
    if "label" in columns:
        lab = columns["label"]
        if fmt == "ascii" and not np.all(lab == np.round(lab)):
            raise MalformedFile("non-integer label value", pos)
        labels = lab.astype(np.int64)
    return points.reshape(count, 3), labels


def write_ply(path: PathLike, cloud: SemanticPointCloud, binary: bool = True,
              precision: str = "double") -> None:
    """Write vertices and labels. ``precision`` is ``"float"`` or ``"double"``."""
    if precision not in ("float", "double"):
        raise ValueError("precision must be 'float' or 'double'")
    n = len(cloud)
    fmt = "binary_little_endian" if binary else "ascii"
    header = (f"ply\nformat {fmt} 1.0\nelement vertex {n}\n"
              f"property {precision} x\nproperty {precision} y\nproperty {precision} z\n"
              "property int label\nend_header\n")
    ctype = "<f8" if precision == "double" else "<f4"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            rec = np.empty(n, dtype=[("x", ctype), ("y", ctype), ("z", ctype), ("label", "<i4")])
            rec["x"], rec["y"], rec["z"] = cloud.points.T
            rec["label"] = cloud.labels
            fh.write(rec.tobytes())
        else:
            pts = cloud.points.astype(ctype).tolist()
            for (x, y, z), lab in zip(pts, cloud.labels.tolist()):
                fh.write(f"{x!r} {y!r} {z!r} {lab}\n".encode("ascii"))


# --- KITTI -----------------------------------------------------------------

def read_kitti_scan(path: PathLike) -> NDArray[np.float64]:
    """Velodyne scan coordinates; intensity is dropped."""
    raw = _read_bytes(path)
    if len(raw) % 16:
        raise MalformedFile("scan size is not a multiple of 16 bytes", len(raw) - len(raw) % 16)
    return np.frombuffer(raw, "<f4").reshape(-1, 4)[:, :3].astype(np.float64)


def read_kitti_labels(path: PathLike) -> NDArray[np.int64]:
    """Semantic class per point (low 16 bits of each word)."""
    raw = _read_bytes(path)
    if len(raw) % 4:
        raise MalformedFile("label file size is not a multiple of 4 bytes", len(raw) - len(raw) % 4)
    return (np.frombuffer(raw, "<u4") & 0xFFFF).astype(np.int64)


def write_kitti_scan(path: PathLike, points, intensity=None) -> None:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    rec = np.zeros((pts.shape[0], 4), dtype="<f4")
    rec[:, :3] = pts
    if intensity is not None:
        rec[:, 3] = intensity
    Path(path).write_bytes(rec.tobytes())


def write_kitti_labels(path: PathLike, labels, instances=None) -> None:
    lab = np.asarray(labels, dtype=np.int64)
    if lab.size and (lab.min() < 0 or lab.max() > 0xFFFF):
        raise ValueError("semantic labels must fit in 16 bits")
    words = lab.astype("<u4")
    if instances is not None:
        words |= np.asarray(instances, dtype="<u4") << 16
    Path(path).write_bytes(words.tobytes())


def load_point_cloud(path: PathLike, label_path: PathLike | None = None) -> SemanticPointCloud:
    """Load a labelled cloud from PLY or a KITTI scan.

    A separate label file (KITTI ``.label``) overrides labels embedded in a PLY.
    """
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        points, labels = read_ply(path)
    elif suffix == ".bin":
        points, labels = read_kitti_scan(path), None
    else:
        raise InputError(f"unrecognized point cloud extension {suffix!r} (expected .ply or .bin)")
    if label_path is not None:
        labels = read_kitti_labels(label_path)
        if labels.shape[0] != points.shape[0]:
            raise LengthMismatch(f"{points.shape[0]} points in {path} but "
                                 f"{labels.shape[0]} labels in {label_path}")
    if labels is None:
        raise InputError(f"{path} carries no labels; pass a label file")
    try:
        return SemanticPointCloud(points, labels)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from exc


# --- descriptors -----------------------------------------------------------

def read_descriptors(path: PathLike) -> NDArray[np.float32]:
    raw = _read_bytes(path)
    if len(raw) < _DESC_HEADER.itemsize:
        raise MalformedFile("descriptor header truncated", len(raw))
    head = np.frombuffer(raw, _DESC_HEADER, 1)[0]
    if int(head["magic"]) != DESCRIPTOR_MAGIC:
        raise MalformedFile(f"bad descriptor magic 0x{int(head['magic']):08x}", 0)
    count, dim = int(head["count"]), int(head["dim"])
    if dim == 0:
        raise MalformedFile("descriptor dimension is zero", 8)
    need = _DESC_HEADER.itemsize + 4 * count * dim
    if len(raw) != need:
        raise MalformedFile(f"expected {need} bytes for {count}x{dim} descriptors, found {len(raw)}",
                            min(len(raw), need))
    return np.frombuffer(raw, "<f4", count * dim, _DESC_HEADER.itemsize).reshape(count, dim).astype(np.float32)


def write_descriptors(path: PathLike, vectors) -> None:
    v = np.ascontiguousarray(vectors, dtype="<f4")
    if v.ndim != 2:
        raise ValueError("descriptors must be a 2-D array")
    head = np.array([(DESCRIPTOR_MAGIC, v.shape[0], v.shape[1])], dtype=_DESC_HEADER)
    Path(path).write_bytes(head.tobytes() + v.tobytes())


# --- poses -----------------------------------------------------------------

def read_pose(path: PathLike) -> RigidTransform:
    """Pose from 12 (3x4) or 16 (4x4) numbers; near-orthonormal rotations are projected onto SO(3)."""
    text = _read_bytes(path).decode("ascii", errors="replace")
    try:
        vals = np.array([float(tok) for tok in text.split()], dtype=np.float64)
    except ValueError as exc:
        raise MalformedFile(f"non-numeric token in pose file: {exc}", 0) from exc
    if vals.size == 12:
        m = np.vstack([vals.reshape(3, 4), [0.0, 0.0, 0.0, 1.0]])
    elif vals.size == 16:
        m = vals.reshape(4, 4)
    else:
        raise MalformedFile(f"pose needs 12 or 16 numbers, found {vals.size}", 0)
    r = m[:3, :3]
    u, _, vt = np.linalg.svd(r)
    proj = u @ vt
    if np.linalg.det(proj) < 0 or np.max(np.abs(proj - r)) > 1e-4:
        raise MalformedFile("pose rotation block is not a rotation", 0)
    if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9:
        r = proj
    return RigidTransform(r, m[:3, 3])


def write_pose(path: PathLike, t: RigidTransform) -> None:
    rows = [" ".join(repr(float(v)) for v in row) for row in t.as_matrix()]
    Path(path).write_text("\n".join(rows) + "\n")
