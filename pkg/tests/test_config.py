#!/usr/bin/env python3
"""
Configuration tests: presets, overrides, config files, validation.
"""

import math
import sys
from dataclasses import asdict
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from polyshell.config import (
    PartitionMode,
    PartitionStrategy,
    PipelineConfig,
    RansacParams,
    RefineParams,
    ScanConfig,
)
from polyshell.errors import ConfigError


class TestPresets:
    def test_defaults(self):
        cfg = PipelineConfig.default()
        assert cfg.beta == 40.0
        assert cfg.lam == 0.001
        assert cfg.ransac.inlier_distance == 0.005
        assert cfg.refine.angle_tolerance == pytest.approx(math.radians(5.0))
        assert cfg.strategy.mode is PartitionMode.ADAPTIVE
        assert cfg.use_bounds_faces

    def test_no_bottom_keeps_walls(self):
        cfg = PipelineConfig.no_bottom()
        assert cfg.use_bounds_faces
        assert cfg.strategy.aabb_padding == 0.0

    def test_full_view_drops_walls(self):
        cfg = PipelineConfig.full_view()
        assert not cfg.use_bounds_faces
        assert cfg.strategy.aabb_padding > 0.0

    def test_presets_differ(self):
        presets = [
            PipelineConfig.default(),
            PipelineConfig.full_view(),
            PipelineConfig.no_bottom(),
            PipelineConfig.noisy(),
        ]
        dicts = [asdict(p) for p in presets]
        for i in range(len(dicts)):
            for j in range(i + 1, len(dicts)):
                assert dicts[i] != dicts[j], (i, j)

    def test_noisy_is_looser(self):
        noisy, default = PipelineConfig.noisy(), PipelineConfig.default()
        assert noisy.ransac.inlier_distance > default.ransac.inlier_distance
        assert noisy.refine.angle_tolerance > default.refine.angle_tolerance
        assert noisy.lam > default.lam

    def test_for_noise_scales_inlier_distance(self):
        assert PipelineConfig.for_noise(0.0).ransac.inlier_distance == 0.005
        assert PipelineConfig.for_noise(0.05).ransac.inlier_distance == pytest.approx(0.125)

    def test_strategy_classmethods(self):
        assert PartitionStrategy.exhaustive().mode is PartitionMode.EXHAUSTIVE
        assert PartitionStrategy(mode="adaptive").mode is PartitionMode.ADAPTIVE


class TestOverrides:
    def test_top_level_and_nested(self):
        cfg = PipelineConfig().with_overrides(lam="0.01", **{"ransac.min_support": "80"})
        assert cfg.lam == 0.01
        assert cfg.ransac.min_support == 80

    def test_lambda_alias(self):
        assert PipelineConfig().with_overrides(**{"lambda": 0.2}).lam == 0.2

    def test_enum_and_bool(self):
        cfg = PipelineConfig().with_overrides(**{"strategy.mode": "exhaustive", "use_bounds_faces": "off"})
        assert cfg.strategy.mode is PartitionMode.EXHAUSTIVE
        assert not cfg.use_bounds_faces

    def test_original_untouched(self):
        base = PipelineConfig()
        base.with_overrides(**{"ransac.seed": 5})
        assert base.ransac.seed == 0

    def test_none_values_skipped(self):
        assert PipelineConfig().with_overrides(beta=None).beta == 40.0

    @pytest.mark.parametrize("key,value", [
        ("nonsense", "1"),
        ("ransac.nonsense", "1"),
        ("use_bounds_faces", "maybe"),
        ("beta", "fast"),
    ])
    def test_bad_keys_and_values(self, key, value):
        with pytest.raises(ConfigError):
            PipelineConfig().with_overrides(**{key: value})

    def test_overrides_are_validated(self):
        with pytest.raises(ConfigError):
            PipelineConfig().with_overrides(**{"ransac.inlier_distance": "-1"})

    def test_to_dict_is_flat(self):
        d = PipelineConfig().to_dict()
        assert d["ransac.min_support"] == 50
        assert d["strategy.mode"] == "adaptive"
        assert d["lam"] == 0.001


class TestConfigFile:
    def test_from_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# reconstruction settings\n"
            "lambda = 0.005\n"
            "ransac.inlier_distance = 0.01  # noisy scanner\n"
            "\n"
            "strategy.mode = exhaustive\n"
        )
        cfg = PipelineConfig.from_file(str(path))
        assert cfg.lam == 0.005
        assert cfg.ransac.inlier_distance == 0.01
        assert cfg.strategy.mode is PartitionMode.EXHAUSTIVE

    def test_from_file_on_preset(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("beta = 20\n")
        cfg = PipelineConfig.from_file(str(path), base=PipelineConfig.noisy())
        assert cfg.beta == 20.0
        assert cfg.lam == 0.005

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("lambda 0.1\n")
        with pytest.raises(ConfigError):
            PipelineConfig.from_file(str(path))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            PipelineConfig.from_file(str(tmp_path / "none.cfg"))


class TestValidation:
    @pytest.mark.parametrize("factory", [
        lambda: PipelineConfig(lam=-1.0),
        lambda: PipelineConfig(beta=0.0),
        lambda: PipelineConfig(hausdorff_samples=10),
        lambda: RansacParams(min_support=0),
        lambda: RansacParams(normal_consistency=1.5),
        lambda: RefineParams(angle_tolerance=2.0),
        lambda: RefineParams(distance_tolerance=0.0),
        lambda: PartitionStrategy(vertical_threshold=2.0),
        lambda: ScanConfig(poses=0),
        lambda: ScanConfig(noise_sigma=-0.1),
        lambda: ScanConfig(sphere_radius=0.4),
        lambda: ScanConfig(pose_layout="grid"),
    ])
    def test_rejected(self, factory):
        with pytest.raises(ConfigError):
            factory()

    def test_config_error_is_value_error(self):
        with pytest.raises(ValueError):
            PipelineConfig(lam=-1.0)

    def test_rays_per_pose(self):
        assert ScanConfig(rays_per_side=10).rays_per_pose == 100


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
