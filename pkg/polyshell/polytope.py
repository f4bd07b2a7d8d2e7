"""
Convex cells and incremental halfspace clipping.

A ConvexCell keeps both representations: the halfspace list that defines
it and a cached boundary (outward-oriented convex face rings). Splitting
clips the parent's cached faces instead of enumerating vertices from
scratch, so a split costs O(faces × face size).

Face tags record where each face came from:
    tag >= 0   the supporting plane of primitive `tag`
    tag <  0   bounding-box wall -(tag) - 1, in core.WALL_NAMES order
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from polyshell.core import (
    Aabb,
    Plane,
    Side,
    Tolerance,
    order_ring,
    polygon_area,
    split_polygon,
    weld_points,
)
from polyshell.errors import GeometryError


def wall_tag(wall_index: int) -> int:
    return -(wall_index + 1)


def tag_wall_index(tag: int) -> Optional[int]:
    return -tag - 1 if tag < 0 else None


@dataclass(frozen=True, eq=False)
class CellFace:
    """Convex face ring, counter-clockwise seen from outside the cell."""

    ring: np.ndarray
    tag: int

    @property
    def area(self) -> float:
        return polygon_area(self.ring)


@dataclass(frozen=True, eq=False)
class ConvexCell:
    """Bounded convex polyhedron with cached boundary and measures."""

    halfspaces: tuple[tuple[Plane, Side], ...]
    faces: tuple[CellFace, ...]
    vertices: np.ndarray
    volume: float
    centroid: np.ndarray
    bounds: Aabb = field(repr=False)

    @classmethod
    def from_faces(cls, halfspaces: Sequence[tuple[Plane, Side]], faces: Sequence[CellFace]) -> "ConvexCell":
        faces = tuple(faces)
        if len(faces) < 4:
            raise GeometryError(f"cell with {len(faces)} faces is not a bounded polyhedron")
        pts = np.concatenate([f.ring for f in faces], axis=0)
        _, verts = weld_points(pts, 0.0)
        volume, centroid = _measures(faces, verts)
        return cls(
            halfspaces=tuple(halfspaces),
            faces=faces,
            vertices=verts,
            volume=volume,
            centroid=centroid,
            bounds=Aabb(verts.min(axis=0), verts.max(axis=0)),
        )

    @classmethod
    def box(cls, aabb: Aabb) -> "ConvexCell":
        """The box as a cell; faces tagged as walls."""
        if not aabb.is_solid():
            raise GeometryError("box with zero extent on some axis")
        c = aabb.corners()  # index = x + 2y + 4z
        rings = [
            [0, 4, 6, 2],  # -x
            [1, 3, 7, 5],  # +x
            [0, 1, 5, 4],  # -y
            [2, 6, 7, 3],  # +y
            [0, 2, 3, 1],  # -z
            [4, 5, 7, 6],  # +z
        ]
        faces = [CellFace(c[r].copy(), wall_tag(k)) for k, r in enumerate(rings)]
        halfspaces = [(w, Side.NEGATIVE) for w in aabb.walls()]
        return cls.from_faces(halfspaces, faces)

    @classmethod
    def from_halfspaces(
        cls,
        halfspaces: Sequence[tuple[Plane, Side]],
        bounds: Aabb,
        tags: Optional[Sequence[int]] = None,
        tol: Optional[Tolerance] = None,
    ) -> "ConvexCell":
        """Intersect halfspaces inside `bounds` (box walls bound the result)."""
        tol = tol or Tolerance.for_extent(float(bounds.extent.max()))
        cell = cls.box(bounds)
        for k, (plane, side) in enumerate(halfspaces):
            tag = tags[k] if tags is not None else k
            result = clip_cell(cell, plane, tol=tol, tag=tag)
            if result.kind is SplitKind.BOTH:
                cell = result.positive if side is Side.POSITIVE else result.negative
            elif (result.kind is SplitKind.ALL_POSITIVE) != (side is Side.POSITIVE):
                raise GeometryError(f"halfspace {k} leaves an empty cell")
        return cell

    @property
    def boundary_walls(self) -> frozenset[int]:
        """Indices of the bounding-box walls this cell has a face on."""
        return frozenset(-f.tag - 1 for f in self.faces if f.tag < 0)

    def contains(self, points, eps: float = 0.0) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        inside = np.ones(len(pts), dtype=bool)
        for plane, side in self.halfspaces:
            s = plane.signed_distance(pts)
            inside &= (s >= -eps) if side is Side.POSITIVE else (s <= eps)
        return inside

    def to_dict(self) -> dict:
        return {
            "halfspaces": [
                {**plane.to_dict(), "side": side.value} for plane, side in self.halfspaces
            ],
            "volume": self.volume,
            "centroid": [float(x) for x in self.centroid],
        }


def _measures(faces: Sequence[CellFace], vertices: np.ndarray) -> tuple[float, np.ndarray]:
    origin = vertices.mean(axis=0)
    vol6 = 0.0
    moment = np.zeros(3)
    for f in faces:
        r = f.ring - origin
        if len(r) < 3:
            continue
        a = r[0]
        b = r[1:-1]
        c = r[2:]
        v = np.einsum("ij,ij->i", np.broadcast_to(a, b.shape), np.cross(b, c))
        vol6 += float(v.sum())
        moment += (v[:, None] * (a + b + c)).sum(axis=0)
    if not vol6 > 0.0:
        raise GeometryError("degenerate cell (non-positive volume)")
    volume = vol6 / 6.0
    centroid = origin + moment / (4.0 * vol6)
    return volume, centroid


def cell_measures(cell: ConvexCell) -> tuple[float, np.ndarray]:
    """
    Volume and centroid of a cell.

    Volume is the sum of fan tetrahedra from the vertex mean; the centroid is
    the volume-weighted mean of the tetrahedra centroids.
    """
    if not cell.faces:
        raise GeometryError("unbounded cell (no cached boundary)")
    return _measures(cell.faces, cell.vertices)


class SplitKind(Enum):
    BOTH = "both"
    ALL_POSITIVE = "all_positive"
    ALL_NEGATIVE = "all_negative"


@dataclass(frozen=True, eq=False)
class SplitResult:
    kind: SplitKind
    positive: Optional[ConvexCell] = None
    negative: Optional[ConvexCell] = None
    # cell ∩ plane, counter-clockwise about +plane.normal
    shared_face: Optional[np.ndarray] = None


def clip_cell(
    cell: ConvexCell,
    plane: Plane,
    tol: Optional[Tolerance] = None,
    tag: int = 0,
) -> SplitResult:
    """
    Split a cell by a plane.

    Vertices within tol.plane of the plane count as on it. A split whose
    smaller side is below tol.volume is rejected and reported as lying
    entirely on the larger side.
    """
    tol = tol or Tolerance()
    s = plane.signed_distance(cell.vertices)
    if not np.any(s > tol.plane):
        return SplitResult(SplitKind.ALL_NEGATIVE)
    if not np.any(s < -tol.plane):
        return SplitResult(SplitKind.ALL_POSITIVE)

    pos_faces: list[CellFace] = []
    neg_faces: list[CellFace] = []
    cap_points: list[np.ndarray] = []
    for face in cell.faces:
        p_ring, n_ring = split_polygon(face.ring, plane, tol.plane)
        for ring, bucket in ((p_ring, pos_faces), (n_ring, neg_faces)):
            if len(ring) >= 3 and polygon_area(ring) > tol.area:
                bucket.append(CellFace(ring, face.tag))
                on = np.abs(plane.signed_distance(ring)) <= tol.plane
                if np.any(on):
                    cap_points.append(ring[on])

    if not cap_points:
        return _majority(s)
    _, cap = weld_points(np.concatenate(cap_points, axis=0), tol.plane)
    if len(cap) < 3:
        return _majority(s)
    cap_ring = order_ring(cap, plane.normal)
    if polygon_area(cap_ring) <= tol.area:
        return _majority(s)

    pos_faces.append(CellFace(cap_ring[::-1].copy(), tag))
    neg_faces.append(CellFace(cap_ring, tag))
    try:
        positive = ConvexCell.from_faces(cell.halfspaces + ((plane, Side.POSITIVE),), pos_faces)
        negative = ConvexCell.from_faces(cell.halfspaces + ((plane, Side.NEGATIVE),), neg_faces)
    except GeometryError:
        return _majority(s)
    if positive.volume < tol.volume or negative.volume < tol.volume:
        pv = positive.volume
        nv = negative.volume
        return SplitResult(SplitKind.ALL_POSITIVE if pv >= nv else SplitKind.ALL_NEGATIVE)
    return SplitResult(SplitKind.BOTH, positive, negative, cap_ring)


def _majority(s: np.ndarray) -> SplitResult:
    # grazing cut: report the side holding the farthest vertex
    if float(s.max()) >= -float(s.min()):
        return SplitResult(SplitKind.ALL_POSITIVE)
    return SplitResult(SplitKind.ALL_NEGATIVE)
