#!/usr/bin/env python3
"""
Shell extraction and coplanar merge tests.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from polyshell.buildings import l_building, random_building
from polyshell.complex import build_complex
from polyshell.config import PartitionStrategy
from polyshell.core import Aabb, Plane, PolyMesh, boundary_edge_count
from polyshell.mrf import Labeling
from polyshell.primitives import PlanarSegment
from polyshell.shell import conforming_mesh, extract_shell, merge_coplanar, merge_faces


def plane_segment(axis: int, offset: float, support: int = 100, bounds=None) -> PlanarSegment:
    normal = np.zeros(3)
    normal[axis] = 1.0
    return PlanarSegment(plane=Plane(normal, offset), inliers=np.arange(support), bounds=bounds)


def lattice_complex(ticks):
    """Exhaustive complex of axis planes at the given ticks, inside a padded box."""
    segs = [plane_segment(a, t) for a in range(3) for t in ticks]
    lo, hi = min(ticks) - 0.5, max(ticks) + 0.5
    return build_complex(segs, Aabb(np.full(3, lo), np.full(3, hi)), PartitionStrategy.exhaustive())


def label_where(cx, predicate) -> Labeling:
    return Labeling(np.array([bool(predicate(c.centroid)) for c in cx.cells]))


def in_unit_box(p) -> bool:
    return bool(np.all((p > 0) & (p < 1)))


class TestExtractShell:
    """Boundary of the interior-cell union."""

    def test_single_interior_cell(self):
        cx = lattice_complex([0.0, 1.0])
        assert cx.n_cells == 27
        shell = extract_shell(cx, label_where(cx, in_unit_box))
        assert shell.n_faces == 6
        assert boundary_edge_count(shell.mesh.faces) == 0
        assert shell.mesh.signed_volume() == pytest.approx(1.0)
        assert shell.interior_volume == pytest.approx(1.0)
        assert all(p.tag >= 0 for p in shell.provenance)

    def test_faces_point_out_of_the_interior(self):
        cx = lattice_complex([0.0, 1.0])
        shell = extract_shell(cx, label_where(cx, in_unit_box))
        center = np.array([0.5, 0.5, 0.5])
        for poly in shell.mesh.polygons():
            n = np.cross(poly[1] - poly[0], poly[2] - poly[0])
            assert np.dot(n, poly.mean(axis=0) - center) > 0

    def test_two_cells_merge_to_a_box(self):
        cx = lattice_complex([0.0, 1.0, 2.0])
        labels = label_where(cx, lambda p: 0 < p[0] < 2 and 0 < p[1] < 1 and 0 < p[2] < 1)
        shell = extract_shell(cx, labels)
        assert shell.n_faces == 10
        assert shell.mesh.signed_volume() == pytest.approx(2.0)
        merged = merge_coplanar(shell)
        assert merged.n_faces == 6
        assert boundary_edge_count(merged.faces) == 0
        assert merged.signed_volume() == pytest.approx(2.0)
        assert len(merged.vertices) == 8

    def test_bounding_box_walls_close_the_shell(self):
        """An interior cell touching the box is closed by wall facets."""
        box = Aabb(np.zeros(3), np.ones(3))
        cx = build_complex([plane_segment(2, 0.5)], box, PartitionStrategy.exhaustive())
        shell = extract_shell(cx, label_where(cx, lambda p: p[2] < 0.5))
        assert boundary_edge_count(shell.mesh.faces) == 0
        assert shell.mesh.signed_volume() == pytest.approx(0.5)
        assert len(shell.wall_faces()) == 5
        assert {shell.provenance[k].wall for k in shell.wall_faces()} == {0, 1, 2, 3, 4}

    def test_t_junctions_are_split(self):
        """A face meeting two smaller neighbour faces still gives a closed mesh."""
        box = Aabb(np.zeros(3), np.array([2.0, 1.0, 1.0]))
        patch = Aabb(np.array([1.5, 0.5, 0.0]), np.array([2.0, 0.5, 1.0]))
        segs = [plane_segment(0, 1.0, support=200), plane_segment(1, 0.5, support=100, bounds=patch)]
        cx = build_complex(segs, box, PartitionStrategy.adaptive())
        assert cx.n_cells == 3
        shell = extract_shell(cx, Labeling(np.ones(3, dtype=bool)))
        assert boundary_edge_count(shell.mesh.faces) == 0
        assert shell.mesh.signed_volume() == pytest.approx(2.0)
        assert merge_coplanar(shell).n_faces == 6

    def test_no_interior_cells(self):
        cx = lattice_complex([0.0, 1.0])
        shell = extract_shell(cx, Labeling(np.zeros(cx.n_cells, dtype=bool)))
        assert shell.mesh.is_empty()

    def test_labeling_length_mismatch(self):
        cx = lattice_complex([0.0, 1.0])
        with pytest.raises(ValueError):
            extract_shell(cx, Labeling(np.ones(3, dtype=bool)))


class TestMergeFaces:
    """Coplanar face unions."""

    def test_collinear_vertices_dropped(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [2, 1, 0], [1, 1, 0], [0, 1, 0]], dtype=float)
        mesh = PolyMesh(verts, [[0, 1, 4, 5], [1, 2, 3, 4]])
        result = merge_faces(mesh)
        assert result.mesh.n_faces == 1
        assert len(result.mesh.faces[0]) == 4
        assert result.sources == [[0, 1]]

    def test_opposite_orientation_not_merged(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [2, 0, 0], [2, 1, 0]], dtype=float)
        mesh = PolyMesh(verts, [[0, 1, 2, 3], [1, 2, 5, 4]])
        assert merge_faces(mesh).mesh.n_faces == 2

    def test_group_with_hole_is_flagged(self):
        """Eight squares around a missing center square keep their faces."""
        polys = [
            np.array([[i, j, 0], [i + 1, j, 0], [i + 1, j + 1, 0], [i, j + 1, 0]], dtype=float)
            for i in range(3) for j in range(3) if (i, j) != (1, 1)
        ]
        mesh, _ = conforming_mesh(polys, 1e-9)
        result = merge_faces(mesh)
        assert len(result.flagged) == 1
        assert len(result.flagged[0]) == 8
        assert result.mesh.n_faces == 8

    def test_l_building_has_eight_faces(self):
        mesh = l_building()
        assert mesh.n_faces == 8
        assert boundary_edge_count(mesh.faces) == 0
        assert mesh.signed_volume() == pytest.approx(0.75)

    def test_empty(self):
        assert merge_faces(PolyMesh()).mesh.is_empty()


def triangulated(mesh: PolyMesh) -> PolyMesh:
    return PolyMesh(mesh.vertices, mesh.triangles().tolist())


class TestMergeInvariants:
    """Merging keeps the solid and is a fixed point of itself."""

    @pytest.mark.parametrize("seed", range(6))
    def test_triangle_soup_of_stepped_building(self, seed):
        reference = random_building(np.random.default_rng(seed))
        merged = merge_faces(triangulated(reference)).mesh
        assert boundary_edge_count(merged.faces) == 0
        assert merged.signed_volume() == pytest.approx(reference.signed_volume(), rel=1e-12)
        assert merged.area() == pytest.approx(reference.area(), rel=1e-12)
        assert merged.n_faces <= triangulated(reference).n_faces

    @pytest.mark.parametrize("seed", range(6))
    def test_idempotent(self, seed):
        once = merge_faces(triangulated(random_building(np.random.default_rng(seed)))).mesh
        twice = merge_faces(once).mesh
        assert twice.faces == once.faces
        assert np.array_equal(twice.vertices, once.vertices)

    def test_plain_faces_of_a_building_are_stable(self):
        mesh = random_building(np.random.default_rng(11))
        again = merge_faces(mesh).mesh
        assert again.n_faces == mesh.n_faces
        assert again.signed_volume() == pytest.approx(mesh.signed_volume(), rel=1e-12)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
