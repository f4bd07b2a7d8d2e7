"""
Reconstruction metrics: symmetric mean Hausdorff distance, watertightness,
and the run report.

SMH between surfaces A and B, over area-weighted samples S_A ⊂ A, S_B ⊂ B:

    SMH = ½ (mean_{p∈S_A} dist(p, B) + mean_{q∈S_B} dist(q, A))
    max = max(max_{p∈S_A} dist(p, B), max_{q∈S_B} dist(q, A))

dist is the exact point-to-triangle distance (trimesh closest-point query). Given a point cloud for A,
only the points→B direction is measured (scan-to-model protocol).
"""

import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import trimesh

from polyshell.core import PolyMesh, boundary_edge_count, edge_counts

logger = logging.getLogger(__name__)

MIN_SAMPLES = 1000


@dataclass(frozen=True)
class HausdorffResult:
    smh: float
    max: float
    # per-direction means (B→A is nan for point-cloud input)
    mean_ab: float
    mean_ba: float


def _as_trimesh(mesh: PolyMesh, name: str) -> trimesh.Trimesh:
    if mesh.is_empty():
        raise ValueError(f"{name} is an empty mesh")
    return mesh.to_trimesh()


def _distance(points: np.ndarray, mesh: trimesh.Trimesh) -> np.ndarray:
    _, d, _ = trimesh.proximity.closest_point(mesh, points)
    return np.asarray(d, dtype=np.float64)


def hausdorff(
    a: Union[PolyMesh, np.ndarray],
    b: PolyMesh,
    n_samples: int = 100_000,
    seed: Union[int, tuple[int, int]] = 0,
    normalizer: float = 1.0,
) -> HausdorffResult:
    """
    Symmetric mean and max Hausdorff distance.

    Args:
        a: mesh, or (n, 3) point cloud for the one-directional mode
        b: mesh
        n_samples: surface samples per mesh (≥ 1000)
        seed: one seed, or (seed for a, seed for b); hausdorff(b, a, seed=(sb, sa))
            reproduces hausdorff(a, b, seed=(sa, sb)) exactly
        normalizer: distances are divided by this (e.g. the reference bbox diagonal)

    Raises:
        ValueError: empty input or too few samples
    """
    if n_samples < MIN_SAMPLES:
        raise ValueError(f"n_samples must be >= {MIN_SAMPLES}")
    if not normalizer > 0:
        raise ValueError("normalizer must be > 0")
    if isinstance(seed, tuple):
        seed_a, seed_b = seed
    else:
        seed_a, seed_b = (int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(2))
    tm_b = _as_trimesh(b, "b")

    if not isinstance(a, PolyMesh):
        pts = np.asarray(a, dtype=np.float64).reshape(-1, 3)
        if len(pts) == 0:
            raise ValueError("a is an empty point cloud")
        d = _distance(pts, tm_b)
        d = d / normalizer
        mean = float(d.mean())
        return HausdorffResult(mean, float(d.max()), mean, float("nan"))

    tm_a = _as_trimesh(a, "a")
    pa, _ = trimesh.sample.sample_surface(tm_a, n_samples, seed=seed_a)
    pb, _ = trimesh.sample.sample_surface(tm_b, n_samples, seed=seed_b)
    d_ab = _distance(pa, tm_b)
    d_ba = _distance(pb, tm_a)
    d_ab /= normalizer
    d_ba /= normalizer
    mean_ab, mean_ba = float(d_ab.mean()), float(d_ba.mean())
    return HausdorffResult(
        smh=0.5 * (mean_ab + mean_ba),
        max=float(max(d_ab.max(), d_ba.max())),
        mean_ab=mean_ab,
        mean_ba=mean_ba,
    )


@dataclass(frozen=True)
class WatertightReport:
    closed: bool
    boundary_edges: int
    nonmanifold_edges: int
    signed_volume: float

    def to_dict(self) -> dict:
        return asdict(self)


def watertight_check(mesh: PolyMesh) -> WatertightReport:
    """
    Closedness by directed-edge pairing; non-manifold edges are counted, not failed.

    An undirected edge is non-manifold when more than two face uses touch it.
    """
    counts = edge_counts(mesh.faces)
    uses: dict[tuple[int, int], int] = {}
    for (a, b), k in counts.items():
        key = (a, b) if a < b else (b, a)
        uses[key] = uses.get(key, 0) + k
    nonmanifold = sum(1 for k in uses.values() if k > 2)
    boundary = boundary_edge_count(mesh.faces)
    return WatertightReport(
        closed=boundary == 0 and not mesh.is_empty(),
        boundary_edges=boundary,
        nonmanifold_edges=nonmanifold,
        signed_volume=mesh.signed_volume(),
    )


@dataclass
class ReconReport:
    """
    Outcome of one reconstruction.

    Everything here is a deterministic function of the inputs and seeds;
    wall-clock timings are kept apart in `timings`.
    """

    n_points: int = 0
    n_segments_raw: int = 0
    n_segments: int = 0
    cell_count: int = 0
    adjacency_count: int = 0
    interior_cells: int = 0
    face_count_raw: int = 0
    face_count: int = 0
    unmerged_groups: int = 0
    watertight: bool = False
    boundary_edges: int = 0
    nonmanifold_edges: int = 0
    signed_volume: float = 0.0
    interior_volume: float = 0.0
    energy: dict[str, float] = field(default_factory=dict)
    # fraction of the reference bbox diagonal; None without a reference
    smh: Optional[float] = None
    hausdorff_max: Optional[float] = None
    config: dict = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("timings")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def save(self, path: Union[str, Path], timings_path: Optional[Union[str, Path]] = None) -> None:
        """Write report (and timings) atomically."""
        atomic_write_text(path, self.to_json() + "\n")
        if timings_path is not None:
            atomic_write_text(timings_path, json.dumps(self.timings, indent=2, sort_keys=True) + "\n")


def atomic_write_text(path: Union[str, Path], text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
