"""
Reconstruction Configuration — Tunable Parameters

All parameters of the pipeline in one place, grouped per stage, with
defaults calibrated for scenes normalized to the unit box (R = 1).
Presets cover the common acquisition setups.

Config files are flat `key = value` lines; nested parameters use dotted
keys (`ransac.min_support = 80`). Command-line flags override file values.
"""

import math
import os
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Optional

from polyshell.errors import ConfigError


class PartitionMode(Enum):
    ADAPTIVE = "adaptive"
    EXHAUSTIVE = "exhaustive"


def default_workers() -> int:
    return int(os.environ.get("POLYSHELL_WORKERS", "1"))


@dataclass
class RansacParams:
    """Plane detection parameters (distances in scene units)."""

    # Max orthogonal distance of an inlier to its plane
    inlier_distance: float = 0.005
    # Min |cos| between the sampled-candidate normal and its PCA refit
    normal_consistency: float = 0.9
    # Min number of points for a plane to be reported
    min_support: int = 50
    # Max candidate planes drawn per extracted plane
    max_iterations: int = 2000
    # Probability of having drawn an all-inlier triple before stopping early
    confidence: float = 0.999
    # Neighbour radius for splitting a plane's inliers into connected segments.
    # None = max(3·inlier_distance, 2.5 × median point spacing)
    connectivity_radius: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if not self.inlier_distance > 0:
            raise ConfigError("ransac.inlier_distance must be > 0")
        if self.min_support <= 0:
            raise ConfigError("ransac.min_support must be > 0")
        if self.max_iterations <= 0:
            raise ConfigError("ransac.max_iterations must be > 0")
        if not 0.0 <= self.normal_consistency <= 1.0:
            raise ConfigError("ransac.normal_consistency must be a cosine in [0, 1]")


@dataclass
class RefineParams:
    """Plane refinement (merging) tolerances."""

    # θ: max angle between mergeable planes, radians
    angle_tolerance: float = math.radians(5.0)
    # ε: max inter-segment distance for a merge
    distance_tolerance: float = 0.01

    def __post_init__(self):
        if not 0.0 < self.angle_tolerance < math.pi / 2:
            raise ConfigError("refine.angle_tolerance must be in (0, π/2)")
        if not self.distance_tolerance > 0:
            raise ConfigError("refine.distance_tolerance must be > 0")


@dataclass
class PartitionStrategy:
    """How primitives partition the bounding box."""

    mode: PartitionMode = PartitionMode.ADAPTIVE
    # Global bounds = inlier AABB grown by this fraction of its extent per side
    aabb_padding: float = 0.05
    # Segment AABBs are grown by this multiple of the inlier distance
    segment_padding: float = 2.0
    # Planes with verticality above this are inserted first
    vertical_threshold: float = 0.9
    vertical_priority: bool = True

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = PartitionMode(self.mode)
        if self.aabb_padding < 0 or self.segment_padding < 0:
            raise ConfigError("padding must be >= 0")
        if not 0.0 <= self.vertical_threshold <= 1.0:
            raise ConfigError("vertical_threshold must be in [0, 1]")

    @classmethod
    def adaptive(cls, **kwargs) -> "PartitionStrategy":
        return cls(mode=PartitionMode.ADAPTIVE, **kwargs)

    @classmethod
    def exhaustive(cls, **kwargs) -> "PartitionStrategy":
        return cls(mode=PartitionMode.EXHAUSTIVE, **kwargs)


@dataclass
class ScanConfig:
    """Virtual LiDAR scanner."""

    poses: int = 24
    # Sensor sphere radius as a multiple of the mesh bbox diagonal
    sphere_radius: float = 3.0
    # Upper hemisphere only (no-bottom acquisition)
    hemisphere_only: bool = False
    # Rays per pose = rays_per_side²
    rays_per_side: int = 128
    # Depth noise standard deviation, in units of R when noise_relative
    noise_sigma: float = 0.0
    noise_relative: bool = True
    # "random" (uniform on the sphere) or "fibonacci"
    pose_layout: str = "random"
    # Field of view covers the bbox plus this margin
    fov_margin: float = 0.1
    seed: int = 0
    workers: int = field(default_factory=default_workers)

    def __post_init__(self):
        if self.poses <= 0 or self.rays_per_side <= 0:
            raise ConfigError("poses and rays_per_side must be > 0")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be >= 0")
        if self.sphere_radius <= 0.5:
            raise ConfigError("sphere_radius must exceed the circumscribed radius (0.5 diagonals)")
        if self.pose_layout not in ("random", "fibonacci"):
            raise ConfigError(f"unknown pose_layout {self.pose_layout!r}")

    @property
    def rays_per_pose(self) -> int:
        return self.rays_per_side ** 2


@dataclass
class PipelineConfig:
    """Everything run_pipeline needs.

    `provider` is `oracle:<mesh path>` (exact SDF of a watertight mesh) or
    `sdf:<file>` (sampled field written by an external predictor).
    """

    input_path: str = ""
    provider: str = ""
    output_dir: str = "./polyshell-out"
    # Optional ground-truth mesh for SMH evaluation
    reference_mesh: str = ""

    ransac: RansacParams = field(default_factory=RansacParams)
    refine: RefineParams = field(default_factory=RefineParams)
    strategy: PartitionStrategy = field(default_factory=PartitionStrategy)

    # Occupancy gain β (sigmoid scale relative to mean cell volume)
    beta: float = 40.0
    # Smoothness weight λ
    lam: float = 0.001
    # Use the bounding-box walls as candidate shell faces
    use_bounds_faces: bool = True
    merge_faces: bool = True

    hausdorff_samples: int = 100_000
    hausdorff_seed: int = 0
    workers: int = field(default_factory=default_workers)

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError("lam (λ) must be >= 0")
        if not self.beta > 0:
            raise ConfigError("beta must be > 0")
        if self.hausdorff_samples < 1000:
            raise ConfigError("hausdorff_samples must be >= 1000")

    # === Presets ===

    @classmethod
    def default(cls) -> "PipelineConfig":
        return cls()

    @classmethod
    def full_view(cls) -> "PipelineConfig":
        """
        Complete scans: every side, the floor included, is observed, so the
        shell is built from detected planes only. Box walls are off and any
        cell touching them is forced out.
        """
        return cls(use_bounds_faces=False)

    @classmethod
    def no_bottom(cls) -> "PipelineConfig":
        """
        Upper-hemisphere scans; the floor is completed from the AABB bottom
        wall. The box is not padded, so that wall sits at the lowest observed
        point instead of below it.
        """
        return cls(use_bounds_faces=True, strategy=PartitionStrategy(aabb_padding=0.0))

    @classmethod
    def noisy(cls) -> "PipelineConfig":
        """High-noise scans (σ up to 0.05R): looser inliers, stronger merging and smoothing."""
        return cls(
            ransac=RansacParams(inlier_distance=0.02, min_support=100),
            refine=RefineParams(angle_tolerance=math.radians(10.0), distance_tolerance=0.04),
            lam=0.005,
        )

    @classmethod
    def for_noise(cls, sigma: float) -> "PipelineConfig":
        """Tolerances scaled to a known depth-noise level σ (scene units)."""
        inlier = max(0.005, 2.5 * sigma)
        return cls(
            ransac=RansacParams(inlier_distance=inlier, min_support=50 if sigma < 0.01 else 100),
            refine=RefineParams(
                angle_tolerance=math.radians(5.0 if sigma < 0.01 else 10.0),
                distance_tolerance=max(0.01, 2.0 * inlier),
            ),
            lam=0.001 if sigma < 0.01 else 0.005,
        )

    # === File / override handling ===

    def with_overrides(self, **overrides: Any) -> "PipelineConfig":
        """Copy with values replaced; dotted keys (`ransac.seed`) reach nested params."""
        cfg = replace(
            self,
            ransac=replace(self.ransac),
            refine=replace(self.refine),
            strategy=replace(self.strategy),
        )
        for key, value in overrides.items():
            if value is None:
                continue
            _assign(cfg, key.replace("__", "."), value)
        # re-run validation on the result
        return replace(
            cfg,
            ransac=replace(cfg.ransac),
            refine=replace(cfg.refine),
            strategy=replace(cfg.strategy),
        )

    @classmethod
    def from_file(cls, path: str, base: Optional["PipelineConfig"] = None) -> "PipelineConfig":
        values: dict[str, str] = {}
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key] = value
        return (base or cls()).with_overrides(**values)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if hasattr(value, "__dataclass_fields__"):
                for sub in fields(value):
                    v = getattr(value, sub.name)
                    out[f"{f.name}.{sub.name}"] = v.value if isinstance(v, Enum) else v
            else:
                out[f.name] = value
        return out


def _coerce(current: Any, raw: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    if isinstance(current, bool):
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {raw!r}")
    if isinstance(current, Enum):
        return type(current)(raw)
    if isinstance(current, int):
        return int(float(raw))
    if isinstance(current, float) or current is None:
        try:
            return float(raw)
        except ValueError:
            if current is None:
                return raw
            raise
    return raw


def _assign(cfg: PipelineConfig, key: str, value: Any) -> None:
    if key == "lambda":
        key = "lam"
    target: Any = cfg
    parts = key.split(".")
    for part in parts[:-1]:
        if not hasattr(target, part):
            raise ConfigError(f"unknown config key: {key}")
        target = getattr(target, part)
    name = parts[-1]
    if not hasattr(target, "__dataclass_fields__") or name not in target.__dataclass_fields__:
        raise ConfigError(f"unknown config key: {key}")
    try:
        setattr(target, name, _coerce(getattr(target, name), value))
    except ValueError as e:
        raise ConfigError(f"bad value for {key}: {value!r}") from e
