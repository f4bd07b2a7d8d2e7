"""
Planar Primitives — RANSAC detection and iterative refinement

Detection extracts planes one at a time, largest consensus first:

    1. best plane of the remaining points by open3d's segment_plane
       (seeded per round through o3d.utility.random)
    2. refit the winner by PCA; reject it if the refit normal disagrees
    3. split its inliers into spatially connected components and keep
       components with enough support
    4. remove the winner's inliers from the pool and repeat

Refinement (plane merging) works on a priority queue of segment pairs
ordered by inter-plane angle α_ij. Popping in ascending order, a pair with
α_ij < θ and inter-segment distance d_ij < ε is merged (inlier union,
PCA refit) and the merged segment is paired with all survivors. A pair
that fails only on distance is dropped; the loop stops at the first pair
with α_ij ≥ θ.

    d_ij = max(mean_{p∈S_i} |dist(p, plane_j)|, mean_{p∈S_j} |dist(p, plane_i)|)
"""

import hashlib
import heapq
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import open3d as o3d
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from polyshell.config import RansacParams, RefineParams
from polyshell.core import Aabb, Plane, as_points
from polyshell.errors import GeometryError, MeshError

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class PlanarSegment:
    """A fitted plane plus the indices of its supporting points."""

    plane: Plane
    inliers: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    bounds: Optional[Aabb] = None
    # Virtual segments (bounding-box walls) carry no points
    is_virtual: bool = False
    label: str = ""

    def __post_init__(self):
        self.inliers = np.asarray(self.inliers, dtype=np.int64).reshape(-1)

    @property
    def support(self) -> int:
        return int(len(self.inliers))

    @classmethod
    def from_points(cls, points: np.ndarray, inliers, plane: Optional[Plane] = None) -> "PlanarSegment":
        idx = np.unique(np.asarray(inliers, dtype=np.int64))
        sub = points[idx]
        plane = plane if plane is not None else fit_plane_pca(sub)
        return cls(plane=plane, inliers=idx, bounds=Aabb.from_points(sub))

    def residual_rms(self, points: np.ndarray) -> float:
        if self.support == 0:
            return 0.0
        d = self.plane.signed_distance(points[self.inliers])
        return float(np.sqrt(np.mean(d * d)))

    def to_dict(self) -> dict:
        d = {**self.plane.to_dict(), "inliers": self.inliers.tolist()}
        if self.bounds is not None:
            d["bounds"] = self.bounds.to_dict()
        if self.is_virtual:
            d["virtual"] = True
            d["label"] = self.label
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PlanarSegment":
        return cls(
            plane=Plane.from_dict(d),
            inliers=np.asarray(d.get("inliers", []), dtype=np.int64),
            bounds=Aabb.from_dict(d["bounds"]) if "bounds" in d else None,
            is_virtual=bool(d.get("virtual", False)),
            label=d.get("label", ""),
        )

    def __repr__(self) -> str:
        kind = f"virtual {self.label}" if self.is_virtual else f"support={self.support}"
        return f"PlanarSegment({self.plane!r}, {kind})"


# === Fitting ===

def fit_plane_pca(points) -> Plane:
    """
    Least-squares plane through a point set.

    The plane passes through the centroid; its normal is the right singular
    vector of the smallest singular value of the centered points, which
    minimizes the summed squared orthogonal distance.

    Raises:
        GeometryError: fewer than 3 points, or collinear/coincident input
    """
    pts = as_points(points)
    if len(pts) < 3:
        raise GeometryError(f"plane fit needs >= 3 points, got {len(pts)}")
    centroid = pts.mean(axis=0)
    _, s, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    if s[0] == 0.0 or s[1] <= 1e-12 * s[0]:
        raise GeometryError("collinear or coincident points have no unique plane")
    return Plane.from_point_normal(centroid, vt[2]).canonical()


def _spacing(points: np.ndarray) -> float:
    """Median nearest-neighbour distance (on a strided subsample for large clouds)."""
    step = max(1, len(points) // 10_000)
    sample = points[::step]
    if len(sample) < 2:
        return 0.0
    d, _ = cKDTree(points).query(sample, k=2)
    return float(np.median(d[:, 1]))


def _components(points: np.ndarray, radius: float) -> list[np.ndarray]:
    """Connected components of the radius-neighbour graph, largest first."""
    n = len(points)
    pairs = cKDTree(points).query_pairs(radius, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    n_comp, labels = connected_components(graph, directed=False)
    comps = [np.flatnonzero(labels == c) for c in range(n_comp)]
    comps.sort(key=lambda c: (-len(c), int(c[0])))
    return comps


def _segment_plane(pts: np.ndarray, params: RansacParams, seed: int) -> tuple[np.ndarray, float]:
    """Best plane of one pool by open3d RANSAC, as (unit normal, offset)."""
    o3d.utility.random.seed(seed)
    pcd = o3d.geometry.PointCloud()
    pcd.points = o3d.utility.Vector3dVector(pts)
    model, _ = pcd.segment_plane(
        distance_threshold=params.inlier_distance,
        ransac_n=3,
        num_iterations=params.max_iterations,
        probability=params.confidence,
    )
    a, b, c, d = (float(x) for x in model)
    normal = np.array([a, b, c])
    length = float(np.linalg.norm(normal))
    return normal / length, -d / length


def detect_planes(points, params: Optional[RansacParams] = None) -> list[PlanarSegment]:
    """
    Detect planar segments by RANSAC.

    Args:
        points: (n, 3) point cloud
        params: detection parameters (defaults for unit-box scenes)

    Returns:
        Segments in extraction order (largest consensus first). Segments are
        pairwise disjoint; every inlier lies within params.inlier_distance of
        its segment's plane. Empty if no plane reaches params.min_support.
    """
    params = params or RansacParams()
    pts = as_points(points)
    if len(pts) < 3 * params.min_support:
        raise ValueError(
            f"detect_planes needs >= 3·min_support = {3 * params.min_support} points, got {len(pts)}"
        )
    radius = params.connectivity_radius
    if radius is None:
        radius = max(3.0 * params.inlier_distance, 2.5 * _spacing(pts))
    logger.info(f"RANSAC on {len(pts)} points (δ={params.inlier_distance:g}, radius={radius:.4g})")

    remaining = np.arange(len(pts))
    segments: list[PlanarSegment] = []
    round_ = 0

    while len(remaining) >= params.min_support:
        sub_pts = pts[remaining]
        normal, offset = _segment_plane(sub_pts, params, params.seed + round_)
        round_ += 1
        mask = np.abs(sub_pts @ normal - offset) <= params.inlier_distance
        if mask.sum() < params.min_support:
            logger.debug(f"best candidate has {int(mask.sum())} inliers, stopping")
            break
        refit = fit_plane_pca(sub_pts[mask])
        # re-threshold against the refit: equal-score RANSAC ties land on the same members
        members = np.flatnonzero(mask & (np.abs(refit.signed_distance(sub_pts)) <= params.inlier_distance))
        if abs(float(np.dot(refit.normal, normal))) < params.normal_consistency:
            logger.debug("candidate rejected: refit normal inconsistent")
        elif len(members) >= params.min_support:
            for comp in _components(sub_pts[members], radius):
                if len(comp) < params.min_support:
                    continue
                seg = _fit_segment(pts, remaining[members[comp]], params)
                if seg is not None:
                    segments.append(seg)
                    logger.debug(f"segment {len(segments) - 1}: {seg!r}")
        remaining = remaining[~mask]

    logger.info(f"Detected {len(segments)} planar segments, {len(remaining)} points unassigned")
    return segments


def robust_plane(points, max_rounds: int = 10) -> Plane:
    """
    PCA fit with iterative 3σ trimming (σ from the median absolute residual).

    Inlier bands also catch thin strips of adjacent, perpendicular walls;
    trimming keeps those strips from tilting the fit.
    """
    pts = as_points(points)
    plane = fit_plane_pca(pts)
    keep = np.ones(len(pts), dtype=bool)
    for _ in range(max_rounds):
        r = np.abs(plane.signed_distance(pts))
        threshold = max(3.0 * 1.4826 * float(np.median(r)), 1e-12)
        new_keep = r <= threshold
        if new_keep.sum() < max(3, len(pts) // 2) or np.array_equal(new_keep, keep):
            break
        keep = new_keep
        try:
            plane = fit_plane_pca(pts[keep])
        except GeometryError:
            break
    return plane


def _fit_segment(pts: np.ndarray, idx: np.ndarray, params: RansacParams) -> Optional[PlanarSegment]:
    """Robust refit of a component, trimmed to points within the inlier distance."""
    plane = robust_plane(pts[idx])
    idx = idx[np.abs(plane.signed_distance(pts[idx])) <= params.inlier_distance]
    if len(idx) < params.min_support:
        return None
    return PlanarSegment.from_points(pts, idx, plane)


# === Refinement ===

def segment_distance(points: np.ndarray, a: PlanarSegment, b: PlanarSegment) -> float:
    """d_ij: the larger of the two mean point-to-other-plane distances."""
    da = float(np.mean(np.abs(b.plane.signed_distance(points[a.inliers])))) if a.support else 0.0
    db = float(np.mean(np.abs(a.plane.signed_distance(points[b.inliers])))) if b.support else 0.0
    return max(da, db)


def refine_planes(
    points,
    segments: Sequence[PlanarSegment],
    params: Optional[RefineParams] = None,
) -> list[PlanarSegment]:
    """
    Merge near-coplanar, nearby segments.

    Args:
        points: the point cloud the segments index into
        segments: raw segments (e.g. from detect_planes)
        params: angle tolerance θ and distance tolerance ε

    Returns:
        Surviving segments. The inlier multiset is preserved and no
        surviving pair has both α < θ and d < ε. Output is ordered by the
        smallest input position each survivor absorbed.
    """
    params = params or RefineParams()
    if not segments:
        return []
    pts = as_points(points)

    alive: dict[int, PlanarSegment] = {i: s for i, s in enumerate(segments)}
    origin: dict[int, int] = {i: i for i in alive}
    next_id = len(segments)
    heap: list[tuple[float, int, int]] = []
    for i in alive:
        for j in alive:
            if i < j:
                heap.append((alive[i].plane.angle_to(alive[j].plane), i, j))
    heapq.heapify(heap)

    merges = 0
    while heap:
        angle, i, j = heapq.heappop(heap)
        if i not in alive or j not in alive:
            continue  # stale
        if angle >= params.angle_tolerance:
            break
        a, b = alive[i], alive[j]
        d = segment_distance(pts, a, b)
        if d >= params.distance_tolerance:
            # too far apart: drop only this pair; steeper pairs further down may still merge
            continue
        union = np.union1d(a.inliers, b.inliers)
        merged = PlanarSegment.from_points(pts, union)
        del alive[i], alive[j]
        origin[next_id] = min(origin.pop(i), origin.pop(j))
        for k, other in alive.items():
            heapq.heappush(heap, (merged.plane.angle_to(other.plane), k, next_id))
        alive[next_id] = merged
        next_id += 1
        merges += 1
        logger.debug(f"merged pair (α={math.degrees(angle):.3f}°, d={d:.4g}) -> support {merged.support}")

    logger.info(f"Refinement: {len(segments)} -> {len(alive)} segments ({merges} merges)")
    return [alive[k] for k in sorted(alive, key=lambda k: origin[k])]


# === Segment files ===

def points_checksum(points) -> str:
    return hashlib.sha256(np.ascontiguousarray(points, dtype="<f8").tobytes()).hexdigest()


def save_segments(
    segments: Sequence[PlanarSegment],
    path: Union[str, Path],
    points: Optional[np.ndarray] = None,
) -> None:
    """Write segments as JSON with a header identifying the point cloud."""
    header: dict = {"format": "polyshell-segments", "version": 1}
    if points is not None:
        header["points"] = int(len(points))
        header["checksum"] = points_checksum(points)
    doc = {"header": header, "segments": [s.to_dict() for s in segments]}
    Path(path).write_text(json.dumps(doc, indent=1))


def load_segments(path: Union[str, Path], points: Optional[np.ndarray] = None) -> list[PlanarSegment]:
    """
    Read a segment file. If `points` is given, the header checksum must match.

    Raises:
        MeshError: unreadable file or checksum mismatch
    """
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as e:
        raise MeshError(f"cannot read segment file {path}: {e}") from e
    header = doc.get("header", {})
    if points is not None and "checksum" in header and header["checksum"] != points_checksum(points):
        raise MeshError(f"{path}: segments were detected on a different point cloud")
    segments = [PlanarSegment.from_dict(d) for d in doc.get("segments", [])]
    if points is not None:
        for s in segments:
            if s.bounds is None and s.support:
                s.bounds = Aabb.from_points(points[s.inliers])
    return segments


if __name__ == "__main__":
    from polyshell.buildings import box_building
    import trimesh

    logging.basicConfig(level=logging.INFO, format="%(message)s")
    mesh = box_building()
    pts, _ = trimesh.sample.sample_surface(mesh.to_trimesh(), 10_000, seed=0)
    raw = detect_planes(pts)
    for s in refine_planes(pts, raw):
        print(s)
