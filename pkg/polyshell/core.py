"""
Core geometry data structures.

Everything here is double precision with a single tolerance scheme:
normalized scenes live in the unit box, so one on-plane epsilon and one
volume epsilon (both scaled by scene size where it matters) are enough.

    Plane:    {p : n·p = d}, |n| = 1, canonical sign
    Aabb:     axis-aligned box [min, max]
    Polygon:  (k, 3) vertex ring, counter-clockwise about its normal
    PolyMesh: shared vertices + arbitrary-sided faces (outward-oriented)
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Sequence

import numpy as np
import trimesh

from polyshell.errors import GeometryError


# Tolerances for scenes normalized to the unit box.
ON_PLANE_EPS = 1e-8
VOLUME_EPS = 1e-12
AREA_EPS = 1e-12
UNIT_NORMAL_TOL = 1e-9


class Side(Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    ON = "on"


@dataclass(frozen=True)
class Tolerance:
    """Tolerances scaled to a scene. `plane` is a distance, `volume` a volume."""

    plane: float = ON_PLANE_EPS
    volume: float = VOLUME_EPS
    area: float = AREA_EPS

    @classmethod
    def for_extent(cls, extent: float) -> "Tolerance":
        s = max(float(extent), 1e-300)
        return cls(plane=ON_PLANE_EPS * s, volume=VOLUME_EPS * s ** 3, area=AREA_EPS * s ** 2)


def as_points(points) -> np.ndarray:
    """Coerce to a float64 (n, 3) array, rejecting non-finite values."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected (n, 3) points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("non-finite coordinates")
    return arr


def _canonical_sign(normal: np.ndarray) -> float:
    # the component of largest magnitude (lowest index on ties) must be positive
    mags = np.abs(normal)
    k = int(np.argmax(mags >= mags.max() - 1e-12))
    return 1.0 if normal[k] > 0 else -1.0


@dataclass(frozen=True, eq=False)
class Plane:
    """Oriented plane {p : normal·p = offset} with unit normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(n)) and math.isfinite(self.offset)):
            raise GeometryError("non-finite plane parameters")
        length = float(np.linalg.norm(n))
        if length == 0.0:
            raise GeometryError("zero plane normal")
        if abs(length - 1.0) > UNIT_NORMAL_TOL:
            n = n / length
            object.__setattr__(self, "offset", float(self.offset) / length)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    @classmethod
    def from_point_normal(cls, point, normal) -> "Plane":
        n = np.asarray(normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        return cls(n, float(np.dot(n, np.asarray(point, dtype=np.float64))))

    @classmethod
    def from_coefficients(cls, a: float, b: float, c: float, d: float) -> "Plane":
        """Plane a·x + b·y + c·z + d = 0."""
        return cls(np.array([a, b, c], dtype=np.float64), -d)

    def canonical(self) -> "Plane":
        """Identify (n, d) with (-n, -d): largest-magnitude normal component positive."""
        if _canonical_sign(self.normal) > 0:
            return self
        return self.flipped()

    def flipped(self) -> "Plane":
        return Plane(-self.normal, -self.offset)

    def signed_distance(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.normal - self.offset

    def side(self, point, eps: float = ON_PLANE_EPS) -> Side:
        return plane_side(self, point, eps)

    def angle_to(self, other: "Plane") -> float:
        """Unoriented angle between the two planes, in [0, π/2]."""
        c = abs(float(np.dot(self.normal, other.normal)))
        return math.acos(min(1.0, c))

    def same_as(self, other: "Plane", angle_tol: float = 1e-6, offset_tol: float = 1e-8) -> bool:
        a, b = self.canonical(), other.canonical()
        cos = float(np.dot(a.normal, b.normal))
        return math.acos(min(1.0, max(-1.0, cos))) < angle_tol and abs(a.offset - b.offset) < offset_tol

    def project(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts - np.outer(self.signed_distance(pts), self.normal)

    def basis(self) -> tuple[np.ndarray, np.ndarray]:
        """Orthonormal (u, v) with u × v = normal."""
        n = self.normal
        helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        u = np.cross(helper, n)
        u /= np.linalg.norm(u)
        v = np.cross(n, u)
        return u, v

    @property
    def verticality(self) -> float:
        """1 − |n_z|: 1 for walls, 0 for horizontal planes."""
        return 1.0 - abs(float(self.normal[2]))

    def to_dict(self) -> dict:
        return {"normal": [float(x) for x in self.normal], "offset": self.offset}

    @classmethod
    def from_dict(cls, d: dict) -> "Plane":
        return cls(np.asarray(d["normal"], dtype=np.float64), float(d["offset"]))

    def __repr__(self) -> str:
        n = self.normal
        return f"Plane(n=({n[0]:.6g}, {n[1]:.6g}, {n[2]:.6g}), d={self.offset:.6g})"


def plane_side(plane: Plane, p, eps: float) -> Side:
    """
    Classify a point against a plane.

    ON iff |n·p − d| ≤ eps, POSITIVE iff n·p − d > eps.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    pt = np.asarray(p, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(pt)):
        raise GeometryError("non-finite point")
    s = float(np.dot(plane.normal, pt) - plane.offset)
    if abs(s) <= eps:
        return Side.ON
    return Side.POSITIVE if s > 0 else Side.NEGATIVE


# Wall order for Aabb.walls(): outward normals -x, +x, -y, +y, -z, +z.
WALL_NAMES = ("-x", "+x", "-y", "+y", "-z", "+z")


@dataclass(frozen=True, eq=False)
class Aabb:
    """Axis-aligned bounding box."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64).reshape(3)
        hi = np.asarray(self.max, dtype=np.float64).reshape(3)
        if np.any(lo > hi):
            raise GeometryError(f"inverted box {lo} > {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def from_points(cls, points) -> "Aabb":
        pts = as_points(points)
        if len(pts) == 0:
            raise GeometryError("bounding box of an empty point set")
        return cls(pts.min(axis=0), pts.max(axis=0))

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    def is_solid(self) -> bool:
        return bool(np.all(self.extent > 0))

    def padded(self, fraction: float = 0.0, absolute: float = 0.0) -> "Aabb":
        """Grow every side by fraction·extent + absolute (extent measured per axis)."""
        pad = self.extent * fraction + absolute
        return Aabb(self.min - pad, self.max + pad)

    def padded_uniform(self, fraction: float) -> "Aabb":
        """Grow every side by fraction of the largest side."""
        pad = float(self.extent.max()) * fraction
        return Aabb(self.min - pad, self.max + pad)

    def intersects(self, other: "Aabb", eps: float = 0.0) -> bool:
        return bool(np.all(self.min <= other.max + eps) and np.all(other.min <= self.max + eps))

    def contains(self, points, eps: float = 0.0) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return np.all((pts >= self.min - eps) & (pts <= self.max + eps), axis=-1)

    def corners(self) -> np.ndarray:
        lo, hi = self.min, self.max
        return np.array([[x, y, z] for z in (lo[2], hi[2]) for y in (lo[1], hi[1]) for x in (lo[0], hi[0])])

    def walls(self) -> list[Plane]:
        """The six wall planes with outward normals, in WALL_NAMES order."""
        planes = []
        for axis in range(3):
            n = np.zeros(3)
            n[axis] = -1.0
            planes.append(Plane(n.copy(), -float(self.min[axis])))
            n[axis] = 1.0
            planes.append(Plane(n.copy(), float(self.max[axis])))
        return planes

    def to_dict(self) -> dict:
        return {"min": [float(x) for x in self.min], "max": [float(x) for x in self.max]}

    @classmethod
    def from_dict(cls, d: dict) -> "Aabb":
        return cls(np.asarray(d["min"]), np.asarray(d["max"]))


# === Polygons ===

def polygon_normal(poly) -> np.ndarray:
    """Newell area vector: direction = normal, length = 2·area."""
    p = np.asarray(poly, dtype=np.float64)
    if len(p) < 3:
        return np.zeros(3)
    q = np.roll(p, -1, axis=0)
    return np.cross(p, q).sum(axis=0)


def polygon_area(poly) -> float:
    """Area of a planar vertex ring (cross-product shoelace). <3 vertices → 0."""
    if len(poly) < 3:
        return 0.0
    return 0.5 * float(np.linalg.norm(polygon_normal(poly)))


def polygon_centroid(poly) -> np.ndarray:
    p = np.asarray(poly, dtype=np.float64)
    n = polygon_normal(p)
    nn = float(np.dot(n, n))
    if nn == 0.0:
        return p.mean(axis=0)
    origin = p[0]
    total = np.zeros(3)
    weight = 0.0
    for i in range(1, len(p) - 1):
        w = float(np.dot(np.cross(p[i] - origin, p[i + 1] - origin), n))
        total += w * (origin + p[i] + p[i + 1]) / 3.0
        weight += w
    return total / weight if weight != 0.0 else p.mean(axis=0)


def order_ring(points, normal) -> np.ndarray:
    """Sort coplanar points of a convex polygon counter-clockwise about `normal`."""
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 3:
        return pts
    plane = Plane.from_point_normal(pts.mean(axis=0), normal)
    u, v = plane.basis()
    rel = pts - pts.mean(axis=0)
    angles = np.arctan2(rel @ v, rel @ u)
    return pts[np.argsort(angles, kind="stable")]


def _edge_point(a: np.ndarray, b: np.ndarray, sa: float, sb: float) -> np.ndarray:
    # computed from the lexicographically smaller endpoint so both faces sharing
    # the edge get bit-identical points
    if tuple(b) < tuple(a):
        a, b, sa, sb = b, a, sb, sa
    t = sa / (sa - sb)
    return a + t * (b - a)


def split_polygon(poly, plane: Plane, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Split a convex polygon by a plane (Sutherland–Hodgman, both halves).

    Returns (positive part, negative part); vertices within eps of the plane
    belong to both parts. A part with fewer than 3 vertices is returned empty.
    """
    p = np.asarray(poly, dtype=np.float64)
    s = plane.signed_distance(p)
    cls = np.where(s > eps, 1, np.where(s < -eps, -1, 0))
    pos: list[np.ndarray] = []
    neg: list[np.ndarray] = []
    k = len(p)
    for i in range(k):
        j = (i + 1) % k
        ci, cj = cls[i], cls[j]
        if ci >= 0:
            pos.append(p[i])
        if ci <= 0:
            neg.append(p[i])
        if ci * cj < 0:
            x = _edge_point(p[i], p[j], s[i], s[j])
            pos.append(x)
            neg.append(x)
    empty = np.zeros((0, 3))
    pos_arr = np.array(pos) if len(pos) >= 3 else empty
    neg_arr = np.array(neg) if len(neg) >= 3 else empty
    return pos_arr, neg_arr


def triangulate_polygon(poly) -> list[tuple[int, int, int]]:
    """
    Ear-clipping triangulation of a simple planar polygon.

    Returns index triples into `poly`, oriented like the polygon.
    Convex input degenerates to a fan.
    """
    p = np.asarray(poly, dtype=np.float64)
    k = len(p)
    if k < 3:
        return []
    if k == 3:
        return [(0, 1, 2)]
    n = polygon_normal(p)
    nn = np.linalg.norm(n)
    if nn == 0.0:
        return [(0, i, i + 1) for i in range(1, k - 1)]
    n = n / nn
    u, v = Plane.from_point_normal(p[0], n).basis()
    xy = np.stack([p @ u, p @ v], axis=1)

    def cross2(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    idx = list(range(k))
    tris: list[tuple[int, int, int]] = []
    guard = 0
    while len(idx) > 3 and guard < k * k:
        guard += 1
        clipped = False
        m = len(idx)
        for t in range(m):
            i0, i1, i2 = idx[t - 1], idx[t], idx[(t + 1) % m]
            a, b, c = xy[i0], xy[i1], xy[i2]
            if cross2(a, b, c) <= 1e-18:
                continue  # reflex or degenerate corner
            inside = False
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                q = xy[j]
                if cross2(a, b, q) >= 0 and cross2(b, c, q) >= 0 and cross2(c, a, q) >= 0:
                    inside = True
                    break
            if inside:
                continue
            tris.append((i0, i1, i2))
            del idx[t]
            clipped = True
            break
        if not clipped:
            # collinear leftovers; fall back to a fan over what remains
            break
    for t in range(1, len(idx) - 1):
        tris.append((idx[0], idx[t], idx[t + 1]))
    return tris


# === Meshes ===

@dataclass
class PolyMesh:
    """Polygon mesh with shared vertices and arbitrary-sided faces."""

    vertices: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    faces: list[list[int]] = field(default_factory=list)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = [list(map(int, f)) for f in self.faces]

    def validate(self, area_eps: float = AREA_EPS) -> None:
        n = len(self.vertices)
        for i, f in enumerate(self.faces):
            if len(f) < 3:
                raise GeometryError(f"face {i} has {len(f)} vertices")
            if min(f) < 0 or max(f) >= n:
                raise GeometryError(f"face {i} indexes outside 0..{n - 1}")
            if polygon_area(self.vertices[f]) <= area_eps:
                raise GeometryError(f"face {i} is degenerate")

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def is_empty(self) -> bool:
        return not self.faces

    def face_polygon(self, i: int) -> np.ndarray:
        return self.vertices[self.faces[i]]

    def polygons(self) -> Iterator[np.ndarray]:
        for f in self.faces:
            yield self.vertices[f]

    def face_areas(self) -> np.ndarray:
        return np.array([polygon_area(p) for p in self.polygons()])

    def area(self) -> float:
        return float(self.face_areas().sum()) if self.faces else 0.0

    def triangles(self) -> np.ndarray:
        """(T, 3) vertex indices; non-triangular faces are ear-clipped."""
        tris = []
        for f in self.faces:
            if len(f) == 3:
                tris.append(tuple(f))
                continue
            for a, b, c in triangulate_polygon(self.vertices[f]):
                tris.append((f[a], f[b], f[c]))
        return np.array(tris, dtype=np.int64).reshape(-1, 3)

    def triangle_coords(self) -> np.ndarray:
        """(T, 3, 3) triangle corner coordinates."""
        return self.vertices[self.triangles()]

    def to_trimesh(self) -> trimesh.Trimesh:
        """
        Triangulated copy for spatial queries (closest point, ray casting,
        surface sampling). Vertex indices are kept as is: no merging or
        reordering, so triangle ids map back through triangles().
        """
        return trimesh.Trimesh(vertices=self.vertices.copy(), faces=self.triangles(), process=False)

    def signed_volume(self) -> float:
        """Enclosed volume by the divergence theorem (exact for closed meshes)."""
        total = 0.0
        for f in self.faces:
            p = self.vertices[f]
            o = p[0]
            for i in range(1, len(p) - 1):
                total += float(np.dot(o, np.cross(p[i], p[i + 1])))
        return total / 6.0

    def bounds(self) -> Aabb:
        return Aabb.from_points(self.vertices)

    def transformed(self, scale: float, translation) -> "PolyMesh":
        """Mesh with vertices mapped to scale·v + translation."""
        t = np.asarray(translation, dtype=np.float64)
        return PolyMesh(self.vertices * scale + t, [list(f) for f in self.faces])

    def compacted(self) -> "PolyMesh":
        """Drop unreferenced vertices."""
        used = sorted({i for f in self.faces for i in f})
        remap = {old: new for new, old in enumerate(used)}
        return PolyMesh(self.vertices[used], [[remap[i] for i in f] for f in self.faces])

    @classmethod
    def from_polygons(cls, polygons: Iterable[np.ndarray], weld_tol: float = 0.0) -> "PolyMesh":
        """Build a mesh from a polygon soup, welding coincident vertices."""
        polys = [np.asarray(p, dtype=np.float64) for p in polygons]
        if not polys:
            return cls()
        allpts = np.concatenate(polys, axis=0)
        labels, unique = weld_points(allpts, weld_tol)
        faces, offset = [], 0
        for p in polys:
            ring = [int(i) for i in labels[offset:offset + len(p)]]
            offset += len(p)
            # collapse consecutive duplicates introduced by welding
            dedup = [v for k, v in enumerate(ring) if v != ring[k - 1]]
            if len(dedup) >= 3:
                faces.append(dedup)
        return cls(unique, faces)


def weld_points(points: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Merge points closer than `tol`. Returns (label per input point, unique points).

    Labels follow first appearance so output order is deterministic.
    """
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) == 0:
        return np.zeros(0, dtype=np.int64), pts.reshape(0, 3)
    if tol <= 0.0:
        uniq, first, inverse = np.unique(pts, axis=0, return_index=True, return_inverse=True)
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        return rank[inverse.reshape(-1)], uniq[order]

    from scipy.spatial import cKDTree
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    tree = cKDTree(pts)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    n = len(pts)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    # relabel components by first appearance; representative = first member
    first_of: dict[int, int] = {}
    labels = np.empty(n, dtype=np.int64)
    reps = []
    for i, c in enumerate(comp):
        c = int(c)
        if c not in first_of:
            first_of[c] = len(reps)
            reps.append(i)
        labels[i] = first_of[c]
    return labels, pts[reps]


def edge_counts(faces: Sequence[Sequence[int]]) -> dict[tuple[int, int], int]:
    """Directed edge multiplicities of a face list."""
    counts: dict[tuple[int, int], int] = {}
    for f in faces:
        k = len(f)
        for i in range(k):
            e = (f[i], f[(i + 1) % k])
            counts[e] = counts.get(e, 0) + 1
    return counts


def unit(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(a))
    if n == 0.0:
        raise GeometryError("zero-length vector")
    return a / n


def boundary_edge_count(faces: Sequence[Sequence[int]]) -> int:
    """
    Unpaired directed edges: Σ over undirected edges of |#(a→b) − #(b→a)|.

    Zero iff every edge is matched by an oppositely oriented use (closed and
    consistently oriented; non-manifold edges with balanced uses count as closed).
    """
    counts = edge_counts(faces)
    total = 0
    for (a, b), k in counts.items():
        if a < b:
            total += abs(k - counts.get((b, a), 0))
        elif (b, a) not in counts:
            total += k
    return total
