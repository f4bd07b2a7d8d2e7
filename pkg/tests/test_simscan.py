#!/usr/bin/env python3
"""
Virtual scanner and query-set tests.
"""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from polyshell.buildings import box_building, gable_house, l_building
from polyshell.config import ScanConfig
from polyshell.core import Aabb, PolyMesh
from polyshell.errors import GeometryError, MeshError, ScanError
from polyshell.meshio import write_mesh
from polyshell.providers import MeshSdfOracle
from polyshell.simscan import (
    DATASET_SPLIT,
    EVAL_NOISE_LEVELS,
    QuerySampleSet,
    assign_splits,
    build_dataset,
    cast,
    noise_schedule,
    normalize_mesh,
    pose_origins,
    sample_queries,
    scan,
    scan_rays,
    view_rays,
)

SMALL = dict(poses=8, rays_per_side=32)


@pytest.fixture(scope="module")
def unit_l():
    return normalize_mesh(l_building())


class TestNormalize:
    def test_unit_box_centered(self):
        mesh, scale = normalize_mesh(box_building(size=(2.0, 4.0, 1.0), origin=(1.0, 1.0, 1.0)))
        box = mesh.bounds()
        assert box.extent.max() == pytest.approx(1.0)
        assert np.allclose(box.center, 0.0)
        assert scale.factor == pytest.approx(0.25)

    def test_to_original(self):
        original = gable_house()
        mesh, scale = normalize_mesh(original)
        assert np.allclose(scale.to_original(mesh.vertices), original.vertices)

    def test_empty_rejected(self):
        with pytest.raises(GeometryError):
            normalize_mesh(PolyMesh())


class TestRays:
    """Poses and pinhole grids."""

    def test_grid_shape_and_center_ray(self):
        box = Aabb(np.full(3, -0.5), np.full(3, 0.5))
        origin = np.array([3.0, 0.0, 0.0])
        dirs = view_rays(origin, box, 5)
        assert dirs.shape == (25, 3)
        assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0)
        assert np.allclose(dirs[12], [-1.0, 0.0, 0.0])

    def test_fov_covers_circumscribed_sphere(self):
        box = Aabb(np.full(3, -0.5), np.full(3, 0.5))
        origin = np.array([0.0, -4.0, 0.0])
        dirs = view_rays(origin, box, 9, fov_margin=0.1)
        half = np.arcsin(0.5 * box.diagonal / 4.0)
        # the edge midpoints of the grid lie at the widened half angle
        angles = np.arccos(np.clip(dirs @ np.array([0.0, 1.0, 0.0]), -1, 1))
        assert angles[4] == pytest.approx(half * 1.1)
        assert angles.max() > half

    def test_looking_straight_down(self):
        box = Aabb(np.full(3, -0.5), np.full(3, 0.5))
        dirs = view_rays(np.array([0.0, 0.0, 5.0]), box, 3)
        assert np.all(np.isfinite(dirs))

    def test_hemisphere_origins(self):
        box = Aabb(np.full(3, -0.5), np.full(3, 0.5))
        for layout in ("random", "fibonacci"):
            cfg = ScanConfig(poses=50, hemisphere_only=True, pose_layout=layout)
            origins = pose_origins(box, cfg, np.random.default_rng(0))
            assert np.all(origins[:, 2] >= box.center[2])
            assert np.allclose(np.linalg.norm(origins - box.center, axis=1), 3.0 * box.diagonal)

    def test_known_depth(self):
        """A ray towards the +x face of the unit cube travels exactly to x = 1."""
        tm = box_building().to_trimesh()
        origin = np.array([3.0, 0.3, 0.6])
        pts, _ = cast(tm, origin, np.array([[-1.0, 0.0, 0.0]]), 0.0)
        assert np.allclose(pts, [[1.0, 0.3, 0.6]])

    def test_miss_yields_nothing(self):
        tm = box_building().to_trimesh()
        pts, dirs = cast(tm, np.array([3.0, 0.3, 0.6]), np.array([[1.0, 0.0, 0.0]]), 0.0)
        assert len(pts) == 0 and len(dirs) == 0

    def test_noise_needs_generator(self):
        tm = box_building().to_trimesh()
        with pytest.raises(ValueError):
            cast(tm, np.array([3.0, 0.3, 0.6]), np.array([[-1.0, 0.0, 0.0]]), 0.01)


class TestScan:
    """Whole scans."""

    def test_noise_free_points_on_surface(self, unit_l):
        mesh, _ = unit_l
        pts = scan(mesh, ScanConfig(**SMALL))
        assert len(pts) > 1000
        d = MeshSdfOracle(mesh).unsigned(pts)
        assert d.max() < 1e-9

    def test_noise_is_along_the_ray(self, unit_l):
        mesh, _ = unit_l
        result = scan_rays(mesh, ScanConfig(**SMALL, noise_sigma=0.01))
        assert result.sigma == pytest.approx(0.01)
        origins = result.origins[result.pose_index]
        offsets = result.points - origins
        assert np.allclose(np.cross(offsets, result.directions), 0.0, atol=1e-9)

    def test_noise_magnitude(self, unit_l):
        mesh, _ = unit_l
        clean = scan_rays(mesh, ScanConfig(**SMALL))
        noisy = scan_rays(mesh, ScanConfig(**SMALL, noise_sigma=0.01))
        # same rays hit, noise only moves points along them
        assert len(clean) == len(noisy)
        shift = np.linalg.norm(noisy.points - clean.points, axis=1)
        assert 0.006 < float(np.std(np.concatenate([shift, -shift]))) < 0.014

    def test_hemisphere_sees_no_floor(self, unit_l):
        mesh, _ = unit_l
        pts = scan(mesh, ScanConfig(**SMALL, hemisphere_only=True))
        floor = mesh.bounds().min[2]
        assert np.sum(np.abs(pts[:, 2] - floor) < 1e-9) == 0

    def test_deterministic(self, unit_l):
        mesh, _ = unit_l
        a = scan(mesh, ScanConfig(**SMALL, noise_sigma=0.005, seed=3))
        b = scan(mesh, ScanConfig(**SMALL, noise_sigma=0.005, seed=3))
        assert np.array_equal(a, b)

    def test_parallel_equals_serial(self, unit_l):
        mesh, _ = unit_l
        a = scan(mesh, ScanConfig(**SMALL, noise_sigma=0.005, workers=1))
        b = scan(mesh, ScanConfig(**SMALL, noise_sigma=0.005, workers=4))
        assert np.array_equal(a, b)

    def test_empty_mesh(self):
        with pytest.raises(ScanError):
            scan(PolyMesh())


class TestNoiseSchedule:
    def test_eval_levels(self):
        assert [noise_schedule("eval", k) for k in range(len(EVAL_NOISE_LEVELS))] == list(EVAL_NOISE_LEVELS)

    def test_train_range(self):
        rng = np.random.default_rng(0)
        draws = [noise_schedule("train", rng=rng) for _ in range(100)]
        assert all(0.0 <= s <= 0.005 for s in draws)

    @pytest.mark.parametrize("kind,level", [("eval", 9), ("eval", None), ("test", 0)])
    def test_invalid(self, kind, level):
        with pytest.raises(ValueError):
            noise_schedule(kind, level)


class TestQueries:
    """SDF-labeled query sets."""

    @pytest.fixture(scope="class")
    def queries(self, unit_l):
        mesh, scale = unit_l
        return sample_queries(mesh, scale, seed=0)

    def test_counts(self, queries):
        assert len(queries) == 2000
        assert int(queries.near_surface.sum()) == 1000

    def test_near_surface_bound(self, queries):
        assert np.all(np.abs(queries.sdf[queries.near_surface]) <= 0.02 + 1e-12)

    def test_volume_in_bounds(self, queries, unit_l):
        mesh, _ = unit_l
        vol = queries.points[~queries.near_surface]
        assert np.all(mesh.bounds().contains(vol))

    def test_labels_match_inside_test(self, queries, unit_l):
        mesh, _ = unit_l
        inside = MeshSdfOracle(mesh).inside(queries.points)
        nonzero = queries.sdf != 0
        assert np.array_equal((queries.sdf > 0)[nonzero], inside[nonzero])

    def test_dropout(self, queries):
        kept = queries.dropout(1000, seed=1)
        assert len(kept) == 1000
        again = queries.dropout(1000, seed=1)
        assert np.array_equal(kept.points, again.points)
        with pytest.raises(ValueError):
            queries.dropout(5000)

    def test_csv_round_trip(self, tmp_path, queries):
        path = tmp_path / "q.csv"
        queries.save_csv(path)
        back = QuerySampleSet.load_csv(path)
        assert np.array_equal(back.points, queries.points)
        assert np.array_equal(back.sdf, queries.sdf)
        assert back.provenance.tolist() == queries.provenance.tolist()

    def test_malformed_csv(self, tmp_path):
        path = tmp_path / "q.csv"
        path.write_text("x,y,z,d\n1,2,three,0\n")
        with pytest.raises(MeshError):
            QuerySampleSet.load_csv(path)

    def test_open_mesh(self):
        cube = box_building()
        with pytest.raises(MeshError):
            sample_queries(PolyMesh(cube.vertices, cube.faces[:-1]))


class TestDataset:
    def test_split_counts(self):
        labels = assign_splits(sum(DATASET_SPLIT.values()))
        assert {k: labels.count(k) for k in DATASET_SPLIT} == DATASET_SPLIT

    def test_small_split_is_complete(self):
        labels = assign_splits(20, seed=1)
        assert len(labels) == 20
        assert labels.count("train") >= 17

    def test_build_dataset(self, tmp_path):
        src = tmp_path / "src"
        src.mkdir()
        write_mesh(l_building(), src / "ell.obj")
        out = tmp_path / "data"
        manifest = build_dataset([src / "ell.obj"], out, seed=0, scan_config=ScanConfig(poses=4, rays_per_side=16), eval_levels=(0, 2))
        entry = manifest["entries"][0]
        assert set(entry["n_points"]) == {"train", "eval0", "eval2"}
        assert entry["n_queries"] == 2000
        assert (out / "ell_queries.csv").exists()
        assert json.loads((out / "manifest.json").read_text()) == manifest


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
