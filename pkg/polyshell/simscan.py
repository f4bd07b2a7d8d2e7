"""
Virtual LiDAR — synthetic scans and SDF-labeled query sets

Scanner model: a sensor sits on a sphere around the mesh (radius a
multiple of the bbox diagonal) and casts a pinhole grid of rays aimed at
the bbox center, with a field of view covering the circumscribed sphere
plus a margin. Each first hit at depth t becomes the point

    p = o + d · (t + ε),   ε ~ 𝒩(0, σ)

so noise acts along the ray. Rays that miss yield nothing; occlusion
falls out of first-hit casting.

Every pose draws noise from its own child of one SeedSequence, so a
parallel scan is bit-identical to a serial one.

Query sets pair 1000 near-surface points (area-weighted surface samples
pushed along the face normal by U[−0.02R, 0.02R]) with 1000 uniform points
in the bounding box, all labeled by the exact mesh SDF.
"""

import csv
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import trimesh

from polyshell.config import ScanConfig
from polyshell.core import Aabb, PolyMesh
from polyshell.errors import GeometryError, MeshError, ScanError
from polyshell.meshio import read_mesh, write_mesh, write_points
from polyshell.providers.mesh_oracle import MeshSdfOracle

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

# Depth-noise levels for evaluation, as fractions of R.
EVAL_NOISE_LEVELS = (0.0, 0.001, 0.005, 0.010, 0.050)
# Training noise is drawn from U[0, TRAIN_NOISE_MAX·R].
TRAIN_NOISE_MAX = 0.005

QUERY_SURFACE = 1000
QUERY_VOLUME = 1000
QUERY_KEEP = 1000
# Near-surface displacement bound, fraction of R
QUERY_OFFSET = 0.02

# Train/val/test counts of the reference building corpus.
DATASET_SPLIT = {"train": 678, "val": 45, "test": 45}

NEAR_SURFACE = "near-surface"
VOLUME = "volume"


@dataclass(frozen=True)
class SceneScale:
    """Scene unit R (largest bbox side) and the normalizing transform."""

    R: float = 1.0
    # normalized = factor · original + translation
    factor: float = 1.0
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not self.R > 0:
            raise GeometryError("scene scale R must be > 0")

    def to_original(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points) - np.asarray(self.translation)) / self.factor


def normalize_mesh(mesh: PolyMesh) -> tuple[PolyMesh, SceneScale]:
    """
    Center the bbox at the origin and scale uniformly so its largest side is 1.

    Raises:
        GeometryError: empty mesh or zero extent
    """
    if len(mesh.vertices) == 0 or mesh.is_empty():
        raise GeometryError("cannot normalize an empty mesh")
    box = mesh.bounds()
    side = float(box.extent.max())
    if not side > 0:
        raise GeometryError("mesh has zero extent")
    factor = 1.0 / side
    translation = -box.center * factor
    out = mesh.transformed(factor, translation)
    return out, SceneScale(1.0, factor, tuple(float(x) for x in translation))


def scene_scale(mesh: PolyMesh) -> float:
    """R of a mesh in its own units."""
    return float(mesh.bounds().extent.max())


# === Poses and rays ===

def pose_origins(bounds: Aabb, config: ScanConfig, rng: np.random.Generator) -> np.ndarray:
    """
    Sensor positions on the sphere of radius sphere_radius × diagonal.

    hemisphere_only keeps z ≥ bbox-center z.
    """
    n = config.poses
    if config.pose_layout == "fibonacci":
        k = np.arange(n) + 0.5
        if config.hemisphere_only:
            z = 1.0 - k / n  # (0, 1]
        else:
            z = 1.0 - 2.0 * k / n
        phi = np.pi * (3.0 - np.sqrt(5.0)) * np.arange(n)
        r = np.sqrt(np.clip(1.0 - z * z, 0.0, 1.0))
        dirs = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    else:
        dirs = rng.normal(size=(n, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        if config.hemisphere_only:
            dirs[:, 2] = np.abs(dirs[:, 2])
    radius = config.sphere_radius * bounds.diagonal
    return bounds.center + radius * dirs


def view_rays(origin: np.ndarray, bounds: Aabb, rays_per_side: int, fov_margin: float = 0.1) -> np.ndarray:
    """
    Unit ray directions of a square pinhole grid aimed at the bbox center.

    The half field of view is the angle subtended by the bbox's
    circumscribed sphere, widened by fov_margin.
    """
    target = bounds.center
    forward = target - origin
    dist = float(np.linalg.norm(forward))
    forward /= dist
    half = float(np.arcsin(min(1.0, 0.5 * bounds.diagonal / dist))) * (1.0 + fov_margin)
    half = min(half, np.radians(89.0))
    up = np.array([0.0, 0.0, 1.0])
    if abs(float(forward @ up)) > 0.99:
        up = np.array([1.0, 0.0, 0.0])
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)
    s = np.tan(half) * np.linspace(-1.0, 1.0, rays_per_side)
    u, v = np.meshgrid(s, s, indexing="xy")
    d = forward + u.reshape(-1, 1) * right + v.reshape(-1, 1) * up
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def cast(
    mesh: trimesh.Trimesh,
    origin: np.ndarray,
    directions: np.ndarray,
    sigma: float,
    rng: Optional[np.random.Generator] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    One pose: first-hit points with depth noise.

    Returns:
        (points, directions of the rays that hit), in ray order
    """
    origins = np.tile(origin, (len(directions), 1))
    locations, index_ray, _ = mesh.ray.intersects_location(origins, directions, multiple_hits=False)
    order = np.argsort(index_ray, kind="stable")
    index_ray = index_ray[order]
    depth = np.einsum("ij,ij->i", locations[order] - origin, directions[index_ray])
    if sigma > 0:
        if rng is None:
            raise ValueError("a generator is required for noisy scans")
        depth = depth + rng.normal(0.0, sigma, size=len(depth))
    d = directions[index_ray]
    return origin + d * depth[:, None], d


@dataclass(eq=False)
class ScanResult:
    """Points with the pose each came from."""

    points: np.ndarray
    origins: np.ndarray  # (poses, 3)
    pose_index: np.ndarray  # per point
    directions: np.ndarray  # per point
    sigma: float

    def __len__(self) -> int:
        return len(self.points)


def scan_rays(mesh: PolyMesh, config: Optional[ScanConfig] = None) -> ScanResult:
    """
    Scan a mesh and keep the per-point ray bookkeeping.

    Raises:
        ScanError: no ray hit the mesh
    """
    config = config or ScanConfig()
    if mesh.is_empty():
        raise ScanError("cannot scan an empty mesh")
    bounds = mesh.bounds()
    tm = mesh.to_trimesh()
    # built once here; pose threads only read it
    _ = tm.ray
    sigma = config.noise_sigma * (scene_scale(mesh) if config.noise_relative else 1.0)

    root = np.random.SeedSequence(config.seed)
    pose_seq, *noise_seqs = root.spawn(config.poses + 1)
    origins = pose_origins(bounds, config, np.random.default_rng(pose_seq))

    def one(k: int) -> tuple[np.ndarray, np.ndarray]:
        dirs = view_rays(origins[k], bounds, config.rays_per_side, config.fov_margin)
        return cast(tm, origins[k], dirs, sigma, np.random.default_rng(noise_seqs[k]))

    if config.workers > 1 and config.poses > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(one, range(config.poses)))
    else:
        parts = [one(k) for k in range(config.poses)]

    counts = [len(p) for p, _ in parts]
    if sum(counts) == 0:
        raise ScanError(f"none of {config.poses * config.rays_per_pose} rays hit the mesh")
    result = ScanResult(
        points=np.concatenate([p for p, _ in parts]),
        origins=origins,
        pose_index=np.repeat(np.arange(config.poses), counts),
        directions=np.concatenate([d for _, d in parts]),
        sigma=sigma,
    )
    logger.info(
        f"Scanned {len(result)} points from {config.poses} poses "
        f"({'upper hemisphere' if config.hemisphere_only else 'full sphere'}, σ={sigma:.4g})"
    )
    return result


def scan(mesh: PolyMesh, config: Optional[ScanConfig] = None) -> np.ndarray:
    """Point cloud of a (normalized) mesh as seen by the virtual scanner."""
    return scan_rays(mesh, config).points


def noise_schedule(kind: str, level: Optional[int] = None, rng: Optional[np.random.Generator] = None) -> float:
    """
    Depth-noise σ as a fraction of R.

    Args:
        kind: "train" (σ ~ U[0, 0.005]) or "eval" (fixed level)
        level: index into EVAL_NOISE_LEVELS for eval
        rng: generator for train draws

    Raises:
        ValueError: unknown kind or level
    """
    if kind == "train":
        rng = rng if rng is not None else np.random.default_rng()
        return float(rng.uniform(0.0, TRAIN_NOISE_MAX))
    if kind == "eval":
        if level is None or not 0 <= int(level) < len(EVAL_NOISE_LEVELS):
            raise ValueError(f"eval noise level must be 0..{len(EVAL_NOISE_LEVELS) - 1}, got {level!r}")
        return EVAL_NOISE_LEVELS[int(level)]
    raise ValueError(f"unknown noise schedule {kind!r}")


# === Query sets ===

@dataclass(eq=False)
class QuerySampleSet:
    """SDF-labeled query points (positive inside) with their provenance."""

    points: np.ndarray
    sdf: np.ndarray
    provenance: np.ndarray  # NEAR_SURFACE / VOLUME per point

    def __len__(self) -> int:
        return len(self.points)

    @property
    def near_surface(self) -> np.ndarray:
        return self.provenance == NEAR_SURFACE

    def subset(self, idx) -> "QuerySampleSet":
        idx = np.asarray(idx)
        return QuerySampleSet(self.points[idx], self.sdf[idx], self.provenance[idx])

    def dropout(self, keep: int = QUERY_KEEP, seed: int = 0) -> "QuerySampleSet":
        """Uniform random subset of `keep` points (order preserved)."""
        if keep > len(self):
            raise ValueError(f"cannot keep {keep} of {len(self)} points")
        rng = np.random.default_rng(seed)
        idx = np.sort(rng.choice(len(self), size=keep, replace=False))
        return self.subset(idx)

    def save_csv(self, path: PathLike) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "y", "z", "d", "provenance"])
            for p, d, prov in zip(self.points, self.sdf, self.provenance):
                w.writerow([repr(float(p[0])), repr(float(p[1])), repr(float(p[2])), repr(float(d)), prov])

    @classmethod
    def load_csv(cls, path: PathLike) -> "QuerySampleSet":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise MeshError(f"{path}: no query rows")
        try:
            pts = np.array([[float(r["x"]), float(r["y"]), float(r["z"])] for r in rows])
            sdf = np.array([float(r["d"]) for r in rows])
        except (KeyError, ValueError) as e:
            raise MeshError(f"{path}: malformed query file: {e}") from e
        prov = np.array([r.get("provenance") or VOLUME for r in rows])
        return cls(pts, sdf, prov)


def sample_queries(
    mesh: PolyMesh,
    scale: Optional[SceneScale] = None,
    seed: int = 0,
    n_surface: int = QUERY_SURFACE,
    n_volume: int = QUERY_VOLUME,
    max_offset: float = QUERY_OFFSET,
    oracle: Optional[MeshSdfOracle] = None,
) -> QuerySampleSet:
    """
    Near-surface and volume query points labeled with the exact SDF.

    Raises:
        MeshError: the mesh is open (sign undefined)
    """
    oracle = oracle or MeshSdfOracle(mesh)
    R = scale.R if scale is not None else scene_scale(mesh)
    surf_seq, off_seq, vol_seq = np.random.SeedSequence(seed).spawn(3)
    pts, which = trimesh.sample.sample_surface(oracle.tm, n_surface, seed=np.random.default_rng(surf_seq))
    normals = oracle.tm.face_normals[which]
    offsets = np.random.default_rng(off_seq).uniform(-max_offset * R, max_offset * R, size=n_surface)
    near = pts + normals * offsets[:, None]
    box = oracle.bounds
    vol = np.random.default_rng(vol_seq).uniform(box.min, box.max, size=(n_volume, 3))
    points = np.concatenate([near, vol])
    prov = np.array([NEAR_SURFACE] * n_surface + [VOLUME] * n_volume)
    return QuerySampleSet(points, oracle.sdf(points), prov)


# === Datasets ===

def file_checksum(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class DatasetEntry:
    mesh: str
    split: str
    seed: int
    scale: float
    train_sigma: float
    pose_mode: str
    n_points: dict[str, int] = field(default_factory=dict)
    n_queries: int = 0
    checksums: dict[str, str] = field(default_factory=dict)


def assign_splits(n: int, seed: int = 0, split: Optional[dict[str, int]] = None) -> list[str]:
    """Shuffle n items into train/val/test in the proportions of `split`."""
    split = split or DATASET_SPLIT
    total = sum(split.values())
    names = list(split)
    counts = [int(round(n * split[k] / total)) for k in names]
    counts[0] += n - sum(counts)
    labels = np.repeat(names, counts)
    return [str(x) for x in np.random.default_rng(seed).permutation(labels)]


def build_dataset(
    meshes: Sequence[PathLike],
    out_dir: PathLike,
    seed: int = 0,
    scan_config: Optional[ScanConfig] = None,
    eval_levels: Sequence[int] = tuple(range(len(EVAL_NOISE_LEVELS))),
) -> dict:
    """
    Scans and query sets for a mesh corpus, plus a JSON manifest.

    Per mesh: the normalized mesh, one scan at a train-noise draw, one scan
    per eval level, and the query CSV. Returns the manifest.
    """
    base = scan_config or ScanConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    splits = assign_splits(len(meshes), seed)
    seeds = np.random.SeedSequence(seed).spawn(len(meshes))
    entries = []
    for k, path in enumerate(meshes):
        name = Path(path).stem
        mesh, scale = normalize_mesh(read_mesh(path))
        scene_seed = int(seeds[k].generate_state(1)[0])
        rng = np.random.default_rng(scene_seed)
        train_sigma = noise_schedule("train", rng=rng)

        files: dict[str, Path] = {"mesh": out / f"{name}.obj"}
        write_mesh(mesh, files["mesh"])
        counts: dict[str, int] = {}
        runs = [("train", train_sigma)] + [(f"eval{lv}", noise_schedule("eval", lv)) for lv in eval_levels]
        for tag, sigma in runs:
            cfg = ScanConfig(**{**asdict(base), "noise_sigma": sigma, "noise_relative": True, "seed": scene_seed})
            pts = scan(mesh, cfg)
            files[tag] = out / f"{name}_{tag}.ply"
            write_points(pts, files[tag])
            counts[tag] = len(pts)
        queries = sample_queries(mesh, scale, seed=scene_seed)
        files["queries"] = out / f"{name}_queries.csv"
        queries.save_csv(files["queries"])

        entries.append(DatasetEntry(
            mesh=str(path),
            split=splits[k],
            seed=scene_seed,
            scale=scale.factor,
            train_sigma=train_sigma,
            pose_mode="hemisphere" if base.hemisphere_only else "sphere",
            n_points=counts,
            n_queries=len(queries),
            checksums={tag: file_checksum(p) for tag, p in files.items()},
        ))
        logger.info(f"[{k + 1}/{len(meshes)}] {name}: {splits[k]}, σ_train={train_sigma:.4f}R")

    manifest = {
        "seed": seed,
        "split_convention": DATASET_SPLIT,
        "eval_levels": [EVAL_NOISE_LEVELS[lv] for lv in eval_levels],
        "scanner": {k: v for k, v in asdict(base).items() if k not in ("noise_sigma", "seed", "workers")},
        "entries": [asdict(e) for e in entries],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return manifest
