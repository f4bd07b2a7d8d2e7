#!/usr/bin/env python3
"""
Geometry kernel tests: planes, boxes, polygons, meshes.
"""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from polyshell.buildings import box_building
from polyshell.core import (
    Aabb,
    Plane,
    PolyMesh,
    Side,
    Tolerance,
    boundary_edge_count,
    order_ring,
    plane_side,
    polygon_area,
    polygon_centroid,
    polygon_normal,
    split_polygon,
    triangulate_polygon,
    weld_points,
)
from polyshell.errors import GeometryError


SQUARE = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype=float)


class TestPlane:
    """Plane construction, sides and canonical form."""

    def test_normal_is_normalized(self):
        p = Plane(np.array([0.0, 0.0, 2.0]), 4.0)
        assert np.allclose(p.normal, [0, 0, 1])
        assert p.offset == pytest.approx(2.0)

    def test_zero_normal_rejected(self):
        with pytest.raises(GeometryError):
            Plane(np.zeros(3), 0.0)

    def test_non_finite_rejected(self):
        with pytest.raises(GeometryError):
            Plane(np.array([np.nan, 0, 1]), 0.0)

    def test_side_classification(self):
        p = Plane(np.array([0.0, 0.0, 1.0]), 0.0)
        assert plane_side(p, [0, 0, 1], 1e-8) is Side.POSITIVE
        assert plane_side(p, [0, 0, -1], 1e-8) is Side.NEGATIVE
        assert plane_side(p, [5, 5, 1e-9], 1e-8) is Side.ON

    def test_side_requires_positive_eps(self):
        p = Plane(np.array([0.0, 0.0, 1.0]), 0.0)
        with pytest.raises(ValueError):
            plane_side(p, [0, 0, 0], 0.0)

    def test_side_rejects_non_finite_point(self):
        p = Plane(np.array([0.0, 0.0, 1.0]), 0.0)
        with pytest.raises(GeometryError):
            plane_side(p, [0, np.inf, 0], 1e-8)

    def test_canonical_identifies_flipped_planes(self):
        p = Plane.from_point_normal([0, 0, 1], [0, 0, -1])
        q = p.canonical()
        assert q.normal[2] > 0
        assert q.offset == pytest.approx(1.0)
        assert p.same_as(p.flipped())

    def test_angle_is_unoriented(self):
        a = Plane(np.array([0.0, 0.0, 1.0]), 0.0)
        b = Plane(np.array([0.0, 0.0, -1.0]), 3.0)
        assert a.angle_to(b) == pytest.approx(0.0)
        c = Plane(np.array([1.0, 0.0, 0.0]), 0.0)
        assert a.angle_to(c) == pytest.approx(math.pi / 2)

    def test_verticality(self):
        assert Plane(np.array([1.0, 0, 0]), 0).verticality == pytest.approx(1.0)
        assert Plane(np.array([0, 0, 1.0]), 0).verticality == pytest.approx(0.0)

    def test_basis_is_right_handed(self):
        p = Plane.from_point_normal([0, 0, 0], [1, 2, 3])
        u, v = p.basis()
        assert np.allclose(np.cross(u, v), p.normal)

    def test_dict_round_trip(self):
        p = Plane.from_point_normal([1, 2, 3], [0.3, -0.4, 0.5])
        q = Plane.from_dict(p.to_dict())
        assert np.array_equal(p.normal, q.normal) and p.offset == q.offset


class TestAabb:
    """Bounding boxes."""

    def test_from_points(self):
        box = Aabb.from_points([[0, 0, 0], [1, 2, 3]])
        assert np.allclose(box.extent, [1, 2, 3])
        assert box.volume == pytest.approx(6.0)
        assert box.diagonal == pytest.approx(math.sqrt(14))

    def test_empty_rejected(self):
        with pytest.raises(GeometryError):
            Aabb.from_points(np.zeros((0, 3)))

    def test_inverted_rejected(self):
        with pytest.raises(GeometryError):
            Aabb(np.ones(3), np.zeros(3))

    def test_padding(self):
        box = Aabb(np.zeros(3), np.array([1.0, 2.0, 4.0])).padded(0.05)
        assert np.allclose(box.min, [-0.05, -0.1, -0.2])
        assert np.allclose(box.max, [1.05, 2.1, 4.2])

    def test_walls_point_outward(self):
        box = Aabb(np.zeros(3), np.ones(3))
        center = box.center
        for w in box.walls():
            assert w.signed_distance(center) < 0

    def test_intersects(self):
        a = Aabb(np.zeros(3), np.ones(3))
        assert a.intersects(Aabb(np.full(3, 0.5), np.full(3, 2.0)))
        assert not a.intersects(Aabb(np.full(3, 1.5), np.full(3, 2.0)))
        assert a.intersects(Aabb(np.full(3, 1.05), np.full(3, 2.0)), eps=0.1)


class TestPolygons:
    """Polygon measures, clipping and triangulation."""

    def test_area_and_normal(self):
        assert polygon_area(SQUARE) == pytest.approx(1.0)
        n = polygon_normal(SQUARE)
        assert np.allclose(n / np.linalg.norm(n), [0, 0, 1])

    def test_degenerate_area_is_zero(self):
        assert polygon_area(SQUARE[:2]) == 0.0

    def test_centroid(self):
        assert np.allclose(polygon_centroid(SQUARE), [0.5, 0.5, 0])

    def test_order_ring_is_ccw(self):
        shuffled = SQUARE[[2, 0, 3, 1]]
        ring = order_ring(shuffled, [0, 0, 1])
        assert polygon_normal(ring)[2] > 0
        assert polygon_area(ring) == pytest.approx(1.0)

    def test_split_preserves_area(self):
        plane = Plane.from_point_normal([0.3, 0, 0], [1, 0, 0])
        pos, neg = split_polygon(SQUARE, plane, 1e-9)
        assert polygon_area(pos) == pytest.approx(0.7)
        assert polygon_area(neg) == pytest.approx(0.3)

    def test_split_missing_plane(self):
        plane = Plane.from_point_normal([2, 0, 0], [1, 0, 0])
        pos, neg = split_polygon(SQUARE, plane, 1e-9)
        assert len(pos) == 0
        assert polygon_area(neg) == pytest.approx(1.0)

    def test_split_along_edge(self):
        """An edge on the plane belongs to both halves but gives no area."""
        plane = Plane.from_point_normal([0, 0, 0], [1, 0, 0])
        pos, neg = split_polygon(SQUARE, plane, 1e-9)
        assert polygon_area(pos) == pytest.approx(1.0)
        assert len(neg) == 0

    def test_triangulate_non_convex(self):
        ell = np.array([[0, 0, 0], [2, 0, 0], [2, 1, 0], [1, 1, 0], [1, 2, 0], [0, 2, 0]], dtype=float)
        tris = triangulate_polygon(ell)
        assert len(tris) == 4
        total = sum(polygon_area(ell[list(t)]) for t in tris)
        assert total == pytest.approx(3.0)
        for t in tris:
            assert polygon_normal(ell[list(t)])[2] > 0


class TestPolyMesh:
    """Mesh measures and welding."""

    def test_cube_volume_and_area(self):
        cube = box_building()
        assert cube.signed_volume() == pytest.approx(1.0)
        assert cube.area() == pytest.approx(6.0)
        assert boundary_edge_count(cube.faces) == 0

    def test_reversed_cube_has_negative_volume(self):
        cube = box_building()
        flipped = PolyMesh(cube.vertices, [f[::-1] for f in cube.faces])
        assert flipped.signed_volume() == pytest.approx(-1.0)

    def test_open_mesh_has_boundary(self):
        cube = box_building()
        open_box = PolyMesh(cube.vertices, cube.faces[:-1])
        assert boundary_edge_count(open_box.faces) == 4

    def test_from_polygons_welds(self):
        a = SQUARE
        b = SQUARE + [1.0 + 1e-12, 0, 0]
        mesh = PolyMesh.from_polygons([a, b], weld_tol=1e-9)
        assert len(mesh.vertices) == 6

    def test_weld_labels_follow_first_appearance(self):
        pts = np.array([[1, 0, 0], [0, 0, 0], [1, 0, 1e-12], [0, 0, 0]], dtype=float)
        labels, unique = weld_points(pts, 1e-9)
        assert labels.tolist() == [0, 1, 0, 1]
        assert np.allclose(unique[0], [1, 0, 0])

    def test_validate_rejects_bad_index(self):
        with pytest.raises(GeometryError):
            PolyMesh(SQUARE, [[0, 1, 7]]).validate()

    def test_transformed(self):
        cube = box_building().transformed(2.0, [1, 0, 0])
        assert cube.signed_volume() == pytest.approx(8.0)
        assert np.allclose(cube.bounds().min, [1, 0, 0])


class TestTolerance:
    def test_scales_with_extent(self):
        t = Tolerance.for_extent(10.0)
        assert t.plane == pytest.approx(1e-7)
        assert t.volume == pytest.approx(1e-9)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
