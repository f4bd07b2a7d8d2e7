"""
Mesh and point-cloud file I/O.

Formats:
    OBJ  ascii `v x y z` / `f i j k ...` records, 1-based indices
    PLY  ascii or binary_little_endian; vertex x/y/z (float64 on write),
         face `vertex_indices` list (uchar count, int32 indices on write)
    XYZ  whitespace-separated `x y z` per line (extra columns ignored)

Binary PLY round-trips vertex coordinates bit-exactly.
"""

import logging
import os
from pathlib import Path
from typing import Union

import numpy as np

from polyshell.core import PolyMesh
from polyshell.errors import MeshError

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

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


# === OBJ ===

def write_obj(mesh: PolyMesh, path: PathLike) -> None:
    lines = [f"# polyshell: {len(mesh.vertices)} vertices, {len(mesh.faces)} faces"]
    lines += [f"v {x!r} {y!r} {z!r}" for x, y, z in mesh.vertices.tolist()]
    lines += ["f " + " ".join(str(i + 1) for i in f) for f in mesh.faces]
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path: PathLike) -> PolyMesh:
    vertices, faces = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            try:
                if parts[0] == "v":
                    vertices.append([float(x) for x in parts[1:4]])
                elif parts[0] == "f":
                    face = []
                    for token in parts[1:]:
                        i = int(token.split("/")[0])
                        # negative indices are relative to the current vertex count
                        face.append(i - 1 if i > 0 else len(vertices) + i)
                    faces.append(face)
            except ValueError as e:
                raise MeshError(f"{path}:{lineno}: bad OBJ record: {line.strip()!r}") from e
    mesh = PolyMesh(np.array(vertices, dtype=np.float64).reshape(-1, 3), faces)
    _check_indices(mesh, path)
    return mesh


# === PLY ===

def write_ply(mesh: PolyMesh, path: PathLike, binary: bool = True) -> None:
    fmt = "binary_little_endian" if binary else "ascii"
    header = [
        "ply",
        f"format {fmt} 1.0",
        "comment polyshell",
        f"element vertex {len(mesh.vertices)}",
        "property double x",
        "property double y",
        "property double z",
    ]
    if mesh.faces:
        header += [f"element face {len(mesh.faces)}", "property list uchar int vertex_indices"]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            fh.write(np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes())
            for f in mesh.faces:
                if len(f) > 255:
                    raise MeshError(f"face with {len(f)} vertices does not fit a uchar count")
                fh.write(np.uint8(len(f)).tobytes())
                fh.write(np.asarray(f, dtype="<i4").tobytes())
        else:
            body = [" ".join(repr(c) for c in v) for v in mesh.vertices.tolist()]
            body += [" ".join(str(x) for x in [len(f), *f]) for f in mesh.faces]
            fh.write(("\n".join(body) + "\n").encode("ascii"))


def _parse_ply_header(fh, path) -> tuple[str, list]:
    if fh.readline().strip() != b"ply":
        raise MeshError(f"{path}: not a PLY file")
    fmt = None
    elements: list = []  # [name, count, [(prop, dtype) | (prop, count_dtype, item_dtype)]]
    while True:
        raw = fh.readline()
        if not raw:
            raise MeshError(f"{path}: truncated PLY header")
        parts = raw.decode("ascii", errors="replace").split()
        if not parts or parts[0] in ("comment", "obj_info"):
            continue
        if parts[0] == "end_header":
            break
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append([parts[1], int(parts[2]), []])
        elif parts[0] == "property":
            if not elements:
                raise MeshError(f"{path}: property before element")
            if parts[1] == "list":
                elements[-1][2].append((parts[4], _PLY_TYPES[parts[2]], _PLY_TYPES[parts[3]]))
            else:
                elements[-1][2].append((parts[2], _PLY_TYPES[parts[1]]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise MeshError(f"{path}: unsupported PLY format {fmt!r}")
    return fmt, elements


def read_ply(path: PathLike) -> PolyMesh:
    """Read vertices (x, y, z) and, if present, face vertex_indices."""
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(fh, path)
        data = fh.read()
    vertices = np.zeros((0, 3))
    faces: list[list[int]] = []
    if fmt == "ascii":
        tokens = data.decode("ascii").split()
        pos = 0
        for name, count, props in elements:
            rows = []
            for _ in range(count):
                row = []
                for prop in props:
                    if len(prop) == 3:
                        k = int(tokens[pos])
                        row.append([int(t) for t in tokens[pos + 1:pos + 1 + k]])
                        pos += 1 + k
                    else:
                        row.append(float(tokens[pos]))
                        pos += 1
                rows.append(row)
            vertices, faces = _collect(name, props, rows, vertices, faces)
    else:
        offset = 0
        for name, count, props in elements:
            if all(len(p) == 2 for p in props):
                dtype = np.dtype([(p[0], "<" + p[1]) for p in props])
                arr = np.frombuffer(data, dtype=dtype, count=count, offset=offset)
                offset += dtype.itemsize * count
                if name == "vertex":
                    vertices = np.stack([arr["x"], arr["y"], arr["z"]], axis=1).astype(np.float64)
                continue
            rows = []
            for _ in range(count):
                row = []
                for prop in props:
                    if len(prop) == 3:
                        ct, it = np.dtype("<" + prop[1]), np.dtype("<" + prop[2])
                        k = int(np.frombuffer(data, dtype=ct, count=1, offset=offset)[0])
                        offset += ct.itemsize
                        row.append(np.frombuffer(data, dtype=it, count=k, offset=offset).tolist())
                        offset += it.itemsize * k
                    else:
                        dt = np.dtype("<" + prop[1])
                        row.append(float(np.frombuffer(data, dtype=dt, count=1, offset=offset)[0]))
                        offset += dt.itemsize
                rows.append(row)
            vertices, faces = _collect(name, props, rows, vertices, faces)
    mesh = PolyMesh(vertices, faces)
    _check_indices(mesh, path)
    return mesh


def _collect(name, props, rows, vertices, faces):
    names = [p[0] for p in props]
    if name == "vertex":
        ix = [names.index(c) for c in ("x", "y", "z")]
        vertices = np.array([[r[i] for i in ix] for r in rows], dtype=np.float64).reshape(-1, 3)
    elif name == "face":
        key = "vertex_indices" if "vertex_indices" in names else "vertex_index"
        k = names.index(key)
        faces = [list(r[k]) for r in rows]
    return vertices, faces


def _check_indices(mesh: PolyMesh, path) -> None:
    n = len(mesh.vertices)
    for i, f in enumerate(mesh.faces):
        if f and (min(f) < 0 or max(f) >= n):
            raise MeshError(f"{path}: face {i} references a vertex outside 0..{n - 1}")


# === Dispatch ===

def read_mesh(path: PathLike) -> PolyMesh:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return read_obj(path)
    if suffix == ".ply":
        return read_ply(path)
    raise MeshError(f"unknown mesh format: {path}")


def write_mesh(mesh: PolyMesh, path: PathLike, binary: bool = True) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        write_obj(mesh, path)
    elif suffix == ".ply":
        write_ply(mesh, path, binary=binary)
    else:
        raise MeshError(f"unknown mesh format: {path}")
    logger.debug(f"Wrote {len(mesh.faces)} faces to {path}")


def read_points(path: PathLike) -> np.ndarray:
    """Point cloud from .ply (vertices only) or .xyz/.txt/.csv."""
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        return read_ply(path).vertices
    delimiter = "," if suffix == ".csv" else None
    try:
        arr = np.loadtxt(path, delimiter=delimiter, usecols=(0, 1, 2), ndmin=2, comments="#")
    except ValueError as e:
        raise MeshError(f"{path}: unreadable point file: {e}") from e
    return arr.astype(np.float64)


def write_points(points: np.ndarray, path: PathLike) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        write_ply(PolyMesh(points, []), path, binary=True)
    else:
        np.savetxt(path, np.asarray(points), fmt="%.17g")
