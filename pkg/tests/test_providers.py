#!/usr/bin/env python3
"""
SDF provider and cell occupancy tests.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from polyshell.buildings import box_building, l_building, random_building, uv_sphere
from polyshell.core import Aabb, PolyMesh
from polyshell.errors import ConfigError, MeshError, ProviderError
from polyshell.meshio import write_mesh
from polyshell.occupancy import cell_occupancy, occupancy_from_sdf
from polyshell.providers import (
    BaseSdfProvider,
    MeshSdfOracle,
    SampledSdfField,
    SdfProvider,
    parse_provider_spec,
    resolve_provider,
)
from tests.reference import winding_numbers


class ConstantProvider(BaseSdfProvider):
    """Returns a fixed value everywhere (NaN to simulate a broken predictor)."""

    def __init__(self, value: float):
        self.value = value

    def sdf(self, points):
        return np.full(len(points), self.value)


class FailingProvider(BaseSdfProvider):
    def sdf(self, points):
        raise RuntimeError("model crashed")


class PlaneProvider(BaseSdfProvider):
    """d = 0.5 − z: inside below z = 0.5."""

    _exact = True

    def sdf(self, points):
        return 0.5 - np.asarray(points)[:, 2]


class TestMeshOracle:
    """Exact signed distance to a closed mesh."""

    @pytest.fixture(scope="class")
    def cube(self):
        return MeshSdfOracle(box_building())

    def test_sign_convention(self, cube):
        d = cube.sdf(np.array([[0.5, 0.5, 0.5], [2.0, 0.5, 0.5], [0.5, 0.5, -0.25]]))
        assert d[0] == pytest.approx(0.5)
        assert d[1] == pytest.approx(-1.0)
        assert d[2] == pytest.approx(-0.25)

    def test_surface_is_zero(self, cube):
        assert cube.sdf_at([1.0, 0.3, 0.7]) == 0.0

    def test_corner_distance(self, cube):
        assert cube.sdf_at([2.0, 2.0, 2.0]) == pytest.approx(-np.sqrt(3.0))

    def test_non_convex_inside(self):
        """The notch of an L is outside even though it is inside the bbox."""
        oracle = MeshSdfOracle(l_building())
        box = oracle.bounds
        notch = box.min + box.extent * [0.75, 0.75, 0.5]
        solid = box.min + box.extent * [0.25, 0.25, 0.5]
        assert oracle.sdf_at(notch) < 0
        assert oracle.sdf_at(solid) > 0

    def test_sphere_is_lipschitz(self):
        oracle = MeshSdfOracle(uv_sphere(1.0, 24, 48))
        pts = np.random.default_rng(0).uniform(-1.5, 1.5, size=(200, 3))
        d = oracle.sdf(pts)
        assert np.all(np.abs(d - (1.0 - np.linalg.norm(pts, axis=1))) < 0.02)
        assert oracle.exact

    def test_open_mesh_rejected(self):
        cube = box_building()
        with pytest.raises(MeshError):
            MeshSdfOracle(PolyMesh(cube.vertices, cube.faces[:-1]))

    def test_empty_mesh_rejected(self):
        with pytest.raises(MeshError):
            MeshSdfOracle(PolyMesh(np.zeros((0, 3)), []))

    def test_satisfies_protocol(self, cube):
        assert isinstance(cube, SdfProvider)

    def test_matches_analytic_box_sdf(self, cube):
        """Closest-face distances over a dense random set agree with the box formula."""
        pts = np.random.default_rng(5).uniform(-1.0, 2.0, size=(3000, 3))
        q = np.abs(pts - 0.5) - 0.5
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = -np.minimum(q.max(axis=1), 0.0)
        expected = np.where(q.max(axis=1) > 0, -outside, inside)
        assert np.allclose(cube.sdf(pts), expected, atol=1e-12)

    def test_face_index_is_built(self, cube):
        assert cube.tm.triangles_tree is not None
        assert len(cube.tm.faces) == 12


def sign_scenes():
    scenes = [(f"stepped-{s}", random_building(np.random.default_rng(s))) for s in range(5)]
    scenes.append(("sphere", uv_sphere(0.5, 12, 24)))
    return scenes


class TestOracleSigns:
    """Oracle signs against winding numbers, on lattices that graze faces and edges."""

    @pytest.mark.parametrize("name,mesh", sign_scenes(), ids=[n for n, _ in sign_scenes()])
    def test_sign_matches_winding_number(self, name, mesh):
        oracle = MeshSdfOracle(mesh)
        box = oracle.bounds.padded(0.1)
        axes = [np.linspace(box.min[k], box.max[k], 13) for k in range(3)]
        lattice = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        d = oracle.sdf(lattice)
        w = winding_numbers(lattice, mesh.triangle_coords())
        clear = np.abs(d) > 1e-9
        assert np.array_equal(d[clear] > 0, w[clear] > 0.5)


class TestSampledField:
    """Grid and scattered fields."""

    @pytest.fixture(scope="class")
    def grid(self):
        box = Aabb(np.full(3, -0.5), np.full(3, 1.5))
        return SampledSdfField.sample_grid(MeshSdfOracle(box_building()), box, 11)

    def test_grid_hits_lattice_values(self, grid):
        assert grid.is_grid
        assert grid.sdf_at([0.5, 0.5, 0.5]) == pytest.approx(0.5)

    def test_grid_interpolates_linear_fields(self):
        box = Aabb(np.zeros(3), np.ones(3))
        field = SampledSdfField.sample_grid(PlaneProvider(), box, 5)
        pts = np.random.default_rng(1).uniform(0, 1, size=(50, 3))
        assert np.allclose(field.sdf(pts), 0.5 - pts[:, 2])

    def test_clamped_queries_counted(self, grid):
        before = grid.clamped_queries
        grid.sdf(np.array([[5.0, 5.0, 5.0], [0.5, 0.5, 0.5]]))
        assert grid.clamped_queries == before + 1

    def test_grid_file_round_trip(self, tmp_path, grid):
        path = tmp_path / "field.sdf"
        grid.save(path)
        back = SampledSdfField.load(path)
        assert back.values.shape == grid.values.shape
        assert np.allclose(back.values, grid.values, atol=1e-6)

    def test_scattered_csv(self, tmp_path):
        pts = np.array([[0, 0, 0], [1, 0, 0]], dtype=float)
        field = SampledSdfField.scattered(pts, [0.25, -0.5])
        path = tmp_path / "field.csv"
        field.save(path)
        back = SampledSdfField.load(path)
        assert back.sdf_at([0.9, 0, 0]) == pytest.approx(-0.5)
        assert back.sdf_at([0.1, 0, 0]) == pytest.approx(0.25)

    def test_truncated_grid(self, tmp_path):
        path = tmp_path / "bad.sdf"
        path.write_bytes(b"\x00" * 10)
        with pytest.raises(ProviderError):
            SampledSdfField.load(path)

    @pytest.mark.parametrize("cut", [1, 3, 4, -1, -2])
    def test_grid_body_length_mismatch(self, tmp_path, grid, cut):
        """Bodies with missing or extra bytes, aligned or not, are provider errors."""
        good = tmp_path / "field.sdf"
        grid.save(good)
        raw = good.read_bytes()
        bad = tmp_path / "bad.sdf"
        bad.write_bytes(raw[:-cut] if cut > 0 else raw + b"\x00" * -cut)
        with pytest.raises(ProviderError):
            SampledSdfField.load(bad)

    def test_non_finite_values(self):
        with pytest.raises(ProviderError):
            SampledSdfField.grid(np.zeros(3), 1.0, np.full((2, 2, 2), np.nan))


class TestProviderSpecs:
    """kind:path provider strings."""

    def test_parse(self):
        assert parse_provider_spec("oracle:a/b.obj") == ("oracle", "a/b.obj")

    @pytest.mark.parametrize("spec", ["mesh:x.obj", "oracle:", "x.obj"])
    def test_bad_spec(self, spec):
        with pytest.raises(ConfigError):
            parse_provider_spec(spec)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            resolve_provider(f"oracle:{tmp_path / 'none.obj'}")

    def test_oracle_from_file(self, tmp_path):
        path = tmp_path / "cube.obj"
        write_mesh(box_building(), path)
        provider = resolve_provider(f"oracle:{path}")
        assert isinstance(provider, MeshSdfOracle)

    def test_provider_passes_through(self):
        p = PlaneProvider()
        assert resolve_provider(p) is p


class TestOccupancy:
    """o = σ(β·d·v/v̄)."""

    def test_symmetry(self):
        d = np.linspace(-0.2, 0.2, 21)
        v = np.random.default_rng(0).uniform(0.1, 2.0, size=21)
        assert np.allclose(occupancy_from_sdf(d, v) + occupancy_from_sdf(-d, v), 1.0)

    def test_monotone_in_distance(self):
        d = np.linspace(-0.2, 0.2, 21)
        o = occupancy_from_sdf(d, np.ones(21))
        assert np.all(np.diff(o) > 0)

    def test_monotone_in_volume_inside(self):
        o = occupancy_from_sdf(np.full(3, 0.05), np.array([1.0, 2.0, 3.0]))
        assert o[0] < o[1] < o[2]

    def test_calibration_point(self):
        o = occupancy_from_sdf(np.array([0.1]), np.array([1.0]))
        assert o[0] == pytest.approx(0.982, abs=1e-3)

    def test_zero_distance_is_one_half(self):
        assert occupancy_from_sdf(np.zeros(1), np.ones(1))[0] == 0.5

    def test_saturated_values_stay_open(self):
        """Very deep or very far cells never reach exactly 0 or 1."""
        o = occupancy_from_sdf(np.array([1e6, -1e6, 50.0, -50.0]), np.array([1.0, 1.0, 3.0, 3.0]))
        assert np.all(o > 0.0) and np.all(o < 1.0)
        assert o[0] == np.nextafter(1.0, 0.0)
        assert o[1] == np.nextafter(0.0, 1.0)

    def test_bad_beta(self):
        with pytest.raises(ValueError):
            occupancy_from_sdf(np.zeros(1), np.ones(1), beta=0.0)

    def test_cell_occupancy(self):
        cents = np.array([[0.5, 0.5, 0.25], [0.5, 0.5, 0.75]])
        occ = cell_occupancy(cents, [1.0, 1.0], PlaneProvider())
        assert occ.values[0] > 0.5 > occ.values[1]
        assert np.allclose(occ.sdf, [0.25, -0.25])

    def test_non_finite_names_cell(self):
        with pytest.raises(ProviderError) as info:
            cell_occupancy(np.zeros((3, 3)), np.ones(3), ConstantProvider(np.nan))
        assert info.value.cell_index == 0

    def test_provider_failure_wrapped(self):
        with pytest.raises(ProviderError):
            cell_occupancy(np.zeros((2, 3)), np.ones(2), FailingProvider())

    def test_parallel_matches_serial(self):
        rng = np.random.default_rng(3)
        cents = rng.uniform(0, 1, size=(9000, 3))
        vols = rng.uniform(0.5, 1.5, size=9000)
        a = cell_occupancy(cents, vols, PlaneProvider(), workers=1)
        b = cell_occupancy(cents, vols, PlaneProvider(), workers=4)
        assert np.array_equal(a.values, b.values)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
