"""
Shell Extraction — outer surface of the interior cells

The surface is made of
    (a) faces shared by an in-cell and an out-cell, oriented from in to out
    (b) bounding-box facets of in-cells, oriented outward

so it is closed by construction (manifoldness is not enforced: two
interior blocks touching along an edge give an edge with four faces).
Adaptive partitioning leaves T-junctions where one cell face meets several
smaller neighbour faces; after welding, such vertices are inserted into
the long edges so every edge is matched by an opposite one.

merge_coplanar() then unions edge-connected faces on the same oriented
plane into single polygons (shapely union in the plane's 2D frame, mapped
back onto the shared mesh vertices) and drops vertices that are collinear in every
ring using them.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import shapely
from scipy.spatial import cKDTree
from shapely.geometry.polygon import orient

from polyshell.core import Plane, PolyMesh, polygon_centroid, polygon_normal, weld_points
from polyshell.mrf import Labeling
from polyshell.polytope import tag_wall_index, wall_tag

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FaceProvenance:
    """Interior cell a shell face bounds, and what lies across it."""

    cell: int
    # neighbour cell index, or -(wall + 1) for a bounding-box facet
    neighbor: int
    # supporting primitive (>= 0) or wall tag (< 0)
    tag: int

    @property
    def wall(self) -> Optional[int]:
        return tag_wall_index(self.neighbor)


@dataclass(eq=False)
class Shell:
    """Closed polygonal surface of the interior-cell union."""

    mesh: PolyMesh
    provenance: list[FaceProvenance] = field(default_factory=list)
    interior_volume: float = 0.0

    @property
    def n_faces(self) -> int:
        return self.mesh.n_faces

    def wall_faces(self) -> list[int]:
        return [k for k, p in enumerate(self.provenance) if p.wall is not None]


def extract_shell(cx, labeling: Labeling, weld_tol: Optional[float] = None) -> Shell:
    """
    Boundary of the union of cells labeled in.

    Args:
        cx: CellComplex
        labeling: per-cell in/out, aligned with cx.cells
        weld_tol: vertex welding distance (default 10× the complex's on-plane tolerance)

    Returns:
        Shell whose mesh is closed and encloses Σ volume of the in-cells.
        Empty (with a warning) when no cell is in.
    """
    inside = np.asarray(labeling.inside, dtype=bool)
    cells = cx.cells
    if len(inside) != len(cells):
        raise ValueError(f"labeling has {len(inside)} cells, complex has {len(cells)}")
    if not inside.any():
        logger.warning("no interior cells: empty shell")
        return Shell(PolyMesh())

    rings: list[np.ndarray] = []
    provenance: list[FaceProvenance] = []
    for r in cx.adjacency:
        if inside[r.i] == inside[r.j]:
            continue
        if inside[r.i]:
            rings.append(r.ring)
            provenance.append(FaceProvenance(r.i, r.j, r.tag))
        else:
            rings.append(r.ring[::-1])
            provenance.append(FaceProvenance(r.j, r.i, r.tag))
    for i in np.flatnonzero(inside):
        for f in cells[i].faces:
            wall = tag_wall_index(f.tag)
            if wall is not None:
                rings.append(f.ring)
                provenance.append(FaceProvenance(int(i), wall_tag(wall), f.tag))

    tol = weld_tol if weld_tol is not None else 10.0 * cx.tolerance.plane
    mesh, kept = conforming_mesh(rings, tol)
    interior_volume = float(sum(cells[i].volume for i in np.flatnonzero(inside)))
    shell = Shell(mesh, [provenance[k] for k in kept], interior_volume)
    logger.info(f"Shell: {mesh.n_faces} faces from {int(inside.sum())} interior cells")
    return shell


def conforming_mesh(rings: Sequence[np.ndarray], tol: float) -> tuple[PolyMesh, list[int]]:
    """
    Weld a polygon soup and split edges at vertices lying on them.

    Returns the mesh and, per output face, the index of its input ring
    (rings that collapse under welding are dropped).
    """
    if not rings:
        return PolyMesh(), []
    pts = np.concatenate([np.asarray(r, dtype=np.float64) for r in rings], axis=0)
    labels, verts = weld_points(pts, tol)
    faces: list[list[int]] = []
    kept: list[int] = []
    offset = 0
    for k, r in enumerate(rings):
        ring = [int(v) for v in labels[offset:offset + len(r)]]
        offset += len(r)
        ring = [v for t, v in enumerate(ring) if v != ring[t - 1]]
        if len(ring) >= 3:
            faces.append(ring)
            kept.append(k)
    faces = _split_t_junctions(verts, faces, tol)
    return PolyMesh(verts, faces), kept


def _split_t_junctions(verts: np.ndarray, faces: list[list[int]], tol: float) -> list[list[int]]:
    tree = cKDTree(verts)
    cache: dict[tuple[int, int], list[int]] = {}

    def interior_points(a: int, b: int) -> list[int]:
        key = (a, b) if a < b else (b, a)
        if key not in cache:
            pa, pb = verts[key[0]], verts[key[1]]
            d = pb - pa
            length = float(np.linalg.norm(d))
            found: list[tuple[float, int]] = []
            if length > 0:
                for c in tree.query_ball_point(0.5 * (pa + pb), 0.5 * length + tol):
                    if c in key:
                        continue
                    t = float(np.dot(verts[c] - pa, d)) / (length * length)
                    if t * length <= tol or (1.0 - t) * length <= tol:
                        continue
                    off = verts[c] - (pa + t * d)
                    if float(np.linalg.norm(off)) <= tol:
                        found.append((t, c))
            found.sort()
            cache[key] = [c for _, c in found]
        mids = cache[key]
        return mids if a < b else mids[::-1]

    out = []
    for f in faces:
        ring: list[int] = []
        for t, a in enumerate(f):
            b = f[(t + 1) % len(f)]
            ring.append(a)
            ring.extend(interior_points(a, b))
        out.append(ring)
    return out


# === Coplanar merging ===

@dataclass(eq=False)
class MergeResult:
    mesh: PolyMesh
    # input face groups left unmerged (merged outline would have holes or pinches)
    flagged: list[list[int]] = field(default_factory=list)
    # input faces per output face
    sources: list[list[int]] = field(default_factory=list)


def _face_planes(mesh: PolyMesh) -> tuple[np.ndarray, np.ndarray]:
    normals = np.zeros((mesh.n_faces, 3))
    offsets = np.zeros(mesh.n_faces)
    for k, poly in enumerate(mesh.polygons()):
        n = polygon_normal(poly)
        length = float(np.linalg.norm(n))
        if length > 0:
            normals[k] = n / length
            offsets[k] = float(np.dot(normals[k], polygon_centroid(poly)))
    return normals, offsets


def _plane_groups(normals: np.ndarray, offsets: np.ndarray, angle_tol: float, offset_tol: float) -> list[list[int]]:
    cos_tol = math.cos(angle_tol)
    reps: list[int] = []
    groups: list[list[int]] = []
    for k in range(len(normals)):
        for g, r in enumerate(reps):
            if float(np.dot(normals[k], normals[r])) >= cos_tol and abs(offsets[k] - offsets[r]) < offset_tol:
                groups[g].append(k)
                break
        else:
            reps.append(k)
            groups.append([k])
    return groups


def _edge_components(faces: list[list[int]], group: list[int]) -> list[list[int]]:
    owner: dict[tuple[int, int], int] = {}
    for k in group:
        f = faces[k]
        for t in range(len(f)):
            owner[(f[t], f[(t + 1) % len(f)])] = k
    parent = {k: k for k in group}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for (a, b), k in owner.items():
        other = owner.get((b, a))
        if other is not None:
            ra, rb = find(k), find(other)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    comps: dict[int, list[int]] = defaultdict(list)
    for k in group:
        comps[find(k)].append(k)
    return [sorted(c) for c in comps.values()]


def _union_outline(
    verts: np.ndarray,
    faces: list[list[int]],
    comp: list[int],
    normal: np.ndarray,
    tol: float,
) -> Optional[list[int]]:
    """
    Boundary loop of the planar union of a face component, as mesh vertex
    indices counter-clockwise about `normal`; None if the union has holes,
    pinches, or is not one polygon.
    """
    u, v = Plane(normal, 0.0).basis()
    used = sorted({i for k in comp for i in faces[k]})
    local = {i: t for t, i in enumerate(used)}
    uv = verts[used] @ np.column_stack([u, v])
    union = shapely.union_all([shapely.Polygon(uv[[local[i] for i in faces[k]]]) for k in comp])
    if not isinstance(union, shapely.Polygon) or len(union.interiors) > 0:
        return None
    ring = np.asarray(orient(union, sign=1.0).exterior.coords)[:-1]
    dist, idx = cKDTree(uv).query(ring)
    if len(ring) < 3 or float(dist.max()) > tol:
        return None

    # the overlay may drop vertices on straight runs; neighbours still use them
    loop: list[int] = []
    for t, a in enumerate(idx):
        b = idx[(t + 1) % len(idx)]
        loop.append(used[a])
        d = uv[b] - uv[a]
        length2 = float(np.dot(d, d))
        if length2 == 0.0:
            return None
        length = math.sqrt(length2)
        s = (uv - uv[a]) @ d / length2
        off = np.abs((uv - uv[a]) @ np.array([-d[1], d[0]])) / length
        on_edge = np.flatnonzero((off <= tol) & (s * length > tol) & ((1.0 - s) * length > tol))
        loop.extend(used[c] for c in on_edge[np.argsort(s[on_edge])])
    if len(set(loop)) != len(loop):
        return None
    return loop


def _drop_collinear(verts: np.ndarray, faces: list[list[int]], tol: float) -> list[list[int]]:
    faces = [list(f) for f in faces]
    changed = True
    while changed:
        changed = False
        uses: dict[int, list[tuple[int, int]]] = defaultdict(list)
        for k, f in enumerate(faces):
            for t in range(len(f)):
                uses[f[t]].append((k, t))
        removable = []
        for v, occ in uses.items():
            pairs = set()
            ok = True
            for k, t in occ:
                f = faces[k]
                if len(f) <= 3:
                    ok = False
                    break
                p, q = f[t - 1], f[(t + 1) % len(f)]
                pairs.add((min(p, q), max(p, q)))
                a, b, c = verts[p], verts[v], verts[q]
                d = c - a
                length = float(np.linalg.norm(d))
                if length == 0.0 or float(np.linalg.norm(np.cross(b - a, d))) / length > tol:
                    ok = False
                    break
                if float(np.dot(b - a, d)) <= 0 or float(np.dot(c - b, d)) <= 0:
                    ok = False
                    break
            if ok and len(pairs) == 1:
                removable.append(v)
        if removable:
            # one vertex per pass per face keeps neighbour pairs valid
            touched: set[int] = set()
            for v in sorted(removable):
                occ = uses[v]
                if any(k in touched for k, _ in occ):
                    continue
                for k, _ in occ:
                    faces[k] = [u for u in faces[k] if u != v]
                    touched.add(k)
                changed = True
    return faces


def merge_faces(
    mesh: PolyMesh,
    angle_tol: float = 1e-6,
    offset_tol: Optional[float] = None,
) -> MergeResult:
    """
    Union edge-connected faces lying on the same oriented plane.

    Args:
        mesh: closed, conforming polygon mesh
        angle_tol: max angle between face normals, radians
        offset_tol: max plane offset difference (default 1e-8 × bbox diagonal)

    Returns:
        MergeResult with the merged mesh and the groups kept unmerged.
    """
    if mesh.is_empty():
        return MergeResult(PolyMesh())
    scale = mesh.bounds().diagonal
    if offset_tol is None:
        offset_tol = 1e-8 * max(scale, 1e-300)
    weld_tol = 1e-9 * max(scale, 1e-300)
    normals, offsets = _face_planes(mesh)
    out_faces: list[list[int]] = []
    sources: list[list[int]] = []
    flagged: list[list[int]] = []
    for group in _plane_groups(normals, offsets, angle_tol, offset_tol):
        for comp in _edge_components(mesh.faces, group):
            if len(comp) == 1:
                out_faces.append(list(mesh.faces[comp[0]]))
                sources.append(comp)
                continue
            loop = _union_outline(mesh.vertices, mesh.faces, comp, normals[comp[0]], weld_tol)
            if loop is None:
                logger.warning(f"coplanar group of {len(comp)} faces not merged (outline has holes)")
                flagged.append(comp)
                for k in comp:
                    out_faces.append(list(mesh.faces[k]))
                    sources.append([k])
                continue
            out_faces.append(loop)
            sources.append(comp)
    order = sorted(range(len(out_faces)), key=lambda k: sources[k][0])
    out_faces = [out_faces[k] for k in order]
    sources = [sources[k] for k in order]
    out_faces = _drop_collinear(mesh.vertices, out_faces, 1e-9 * max(scale, 1e-300))
    merged = PolyMesh(mesh.vertices, out_faces).compacted()
    logger.info(f"Merged {mesh.n_faces} faces into {merged.n_faces}")
    return MergeResult(merged, flagged, sources)


def merge_coplanar(shell: Union[Shell, PolyMesh], angle_tol: float = 1e-6) -> PolyMesh:
    """Merged polygon mesh of a shell (see merge_faces)."""
    mesh = shell.mesh if isinstance(shell, Shell) else shell
    return merge_faces(mesh, angle_tol).mesh
