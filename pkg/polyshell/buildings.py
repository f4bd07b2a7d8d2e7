"""
Synthetic watertight building meshes.

Rectilinear buildings are height fields over a square grid: every grid
cell with height h > 0 is a block [x, x+s] × [y, y+s] × [0, h]. The block
union is emitted as a closed, conforming polygon mesh and then merged to
one polygon per planar face. A gable house and a UV sphere cover the
non-axis-aligned cases.
"""

import logging
from typing import Optional, Sequence

import numpy as np
import trimesh

from polyshell.core import Plane, PolyMesh, polygon_area, polygon_normal
from polyshell.primitives import PlanarSegment
from polyshell.shell import merge_faces

logger = logging.getLogger(__name__)


def box_building(size=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> PolyMesh:
    """Axis-aligned box with six outward quads."""
    o = np.asarray(origin, dtype=np.float64)
    s = np.asarray(size, dtype=np.float64)
    c = np.array([o + s * [x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1)])
    faces = [
        [0, 4, 6, 2],  # -x
        [1, 3, 7, 5],  # +x
        [0, 1, 5, 4],  # -y
        [2, 6, 7, 3],  # +y
        [0, 2, 3, 1],  # -z
        [4, 5, 7, 6],  # +z
    ]
    return PolyMesh(c, faces)


def grid_building(heights, cell_size: float = 1.0) -> PolyMesh:
    """
    Union of blocks over a height field.

    Args:
        heights: (nx, ny) block heights; 0 = no block
        cell_size: grid spacing

    Returns:
        Closed mesh, one polygon per maximal planar face
    """
    h = np.asarray(heights, dtype=np.float64)
    if h.ndim != 2 or not np.any(h > 0):
        raise ValueError("heights must be a 2-D grid with at least one block")
    nx_, ny_ = h.shape

    def height(i: int, j: int) -> float:
        return float(h[i, j]) if 0 <= i < nx_ and 0 <= j < ny_ else 0.0

    # heights present at each grid vertex, for splitting vertical edges
    def levels(i: int, j: int) -> list[float]:
        return sorted({0.0, height(i - 1, j - 1), height(i, j - 1), height(i - 1, j), height(i, j)})

    verts: dict[tuple[float, float, float], int] = {}

    def vid(x: float, y: float, z: float) -> int:
        key = (x * cell_size, y * cell_size, z)
        if key not in verts:
            verts[key] = len(verts)
        return verts[key]

    def vertical(p: tuple[int, int], q: tuple[int, int], lo: float, hi: float) -> list[int]:
        # quad p(lo) → q(lo) → q(hi) → p(hi), with extra vertices on the vertical edges
        up_q = [z for z in levels(*q) if lo < z < hi]
        down_p = [z for z in reversed(levels(*p)) if lo < z < hi]
        ring = [vid(p[0], p[1], lo), vid(q[0], q[1], lo)]
        ring += [vid(q[0], q[1], z) for z in up_q]
        ring += [vid(q[0], q[1], hi), vid(p[0], p[1], hi)]
        ring += [vid(p[0], p[1], z) for z in down_p]
        return ring

    faces: list[list[int]] = []
    for i in range(nx_):
        for j in range(ny_):
            t = height(i, j)
            if t <= 0:
                continue
            faces.append([vid(i, j, t), vid(i + 1, j, t), vid(i + 1, j + 1, t), vid(i, j + 1, t)])
            faces.append([vid(i, j, 0.0), vid(i, j + 1, 0.0), vid(i + 1, j + 1, 0.0), vid(i + 1, j, 0.0)])
    # walls where the height changes; the ring faces away from the taller block
    for i in range(nx_ + 1):
        for j in range(ny_):
            a, b = height(i - 1, j), height(i, j)  # west / east of the line x = i
            if a == b:
                continue
            lo, hi = min(a, b), max(a, b)
            if a > b:  # taller block west: normal +x
                faces.append(vertical((i, j), (i, j + 1), lo, hi))
            else:
                faces.append(vertical((i, j + 1), (i, j), lo, hi))
    for j in range(ny_ + 1):
        for i in range(nx_):
            a, b = height(i, j - 1), height(i, j)  # south / north of the line y = j
            if a == b:
                continue
            lo, hi = min(a, b), max(a, b)
            if a > b:  # taller block south: normal +y
                faces.append(vertical((i + 1, j), (i, j), lo, hi))
            else:
                faces.append(vertical((i, j), (i + 1, j), lo, hi))

    coords = np.array(sorted(verts, key=verts.get), dtype=np.float64)
    raw = PolyMesh(coords, faces)
    return merge_faces(raw).mesh


def l_building(size: float = 1.0, height: float = 1.0) -> PolyMesh:
    """L-shaped prism: three of four quadrants of a square footprint."""
    return grid_building([[height, height], [height, 0.0]], cell_size=size / 2.0)


def random_building(
    rng: np.random.Generator,
    grid: Optional[tuple[int, int]] = None,
    max_levels: int = 4,
) -> PolyMesh:
    """Random stepped building: grid 3–6 per side, integer storey heights."""
    nx_, ny_ = grid if grid is not None else tuple(int(x) for x in rng.integers(3, 7, size=2))
    heights = rng.integers(1, max_levels + 1, size=(nx_, ny_)).astype(np.float64)
    return grid_building(heights * 0.5, cell_size=1.0)


def gable_house(
    length: float = 1.0,
    width: float = 0.6,
    eave: float = 0.5,
    ridge: float = 0.8,
) -> PolyMesh:
    """Rectangular house with a gable roof (ridge along x)."""
    L, W = length, width
    v = np.array([
        [0, 0, 0], [L, 0, 0], [L, W, 0], [0, W, 0],          # 0-3 floor
        [0, 0, eave], [L, 0, eave], [L, W, eave], [0, W, eave],  # 4-7 eaves
        [0, W / 2, ridge], [L, W / 2, ridge],                # 8-9 ridge
    ], dtype=np.float64)
    faces = [
        [0, 3, 2, 1],        # floor
        [0, 1, 5, 4],        # south wall (-y)
        [2, 3, 7, 6],        # north wall (+y)
        [0, 4, 8, 7, 3],     # west gable (-x)
        [1, 2, 6, 9, 5],     # east gable (+x)
        [4, 5, 9, 8],        # south roof
        [6, 7, 8, 9],        # north roof
    ]
    return PolyMesh(v, faces)


def uv_sphere(radius: float = 0.5, n_lat: int = 16, n_lon: int = 32, center=(0.0, 0.0, 0.0)) -> PolyMesh:
    """Closed UV sphere: quads between latitude rings, triangle fans at the poles."""
    c = np.asarray(center, dtype=np.float64)
    verts = [c + [0.0, 0.0, radius]]
    for a in range(1, n_lat):
        theta = np.pi * a / n_lat
        for b in range(n_lon):
            phi = 2.0 * np.pi * b / n_lon
            verts.append(c + radius * np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]))
    verts.append(c + [0.0, 0.0, -radius])
    south = len(verts) - 1

    def ring(a: int, b: int) -> int:
        return 1 + (a - 1) * n_lon + (b % n_lon)

    faces = [[0, ring(1, b), ring(1, b + 1)] for b in range(n_lon)]
    for a in range(1, n_lat - 1):
        for b in range(n_lon):
            faces.append([ring(a, b), ring(a + 1, b), ring(a + 1, b + 1), ring(a, b + 1)])
    faces += [[south, ring(n_lat - 1, b + 1), ring(n_lat - 1, b)] for b in range(n_lon)]
    return PolyMesh(np.array(verts), faces)


def segments_from_mesh(
    mesh: PolyMesh,
    density: float = 2000.0,
    rng: Optional[np.random.Generator] = None,
    min_points: int = 20,
) -> tuple[np.ndarray, list[PlanarSegment]]:
    """
    Ground-truth primitives of a planar mesh: one segment per face.

    Points are sampled on each face (count ∝ area, at least min_points)
    so segments carry realistic supports and inlier boxes.

    Returns:
        (points, segments) with segment inliers indexing into points
    """
    rng = rng or np.random.default_rng(0)

    chunks: list[np.ndarray] = []
    segments: list[PlanarSegment] = []
    offset = 0
    for poly in mesh.polygons():
        area = polygon_area(poly)
        if area <= 0:
            continue
        n = max(min_points, int(round(density * area)))
        face = PolyMesh(poly, [list(range(len(poly)))]).to_trimesh()
        pts, _ = trimesh.sample.sample_surface(face, n, seed=rng)
        plane = Plane.from_point_normal(poly.mean(axis=0), polygon_normal(poly)).canonical()
        seg = PlanarSegment.from_points(pts, np.arange(n), plane)
        seg.inliers = seg.inliers + offset
        segments.append(seg)
        chunks.append(pts)
        offset += n
    return np.concatenate(chunks, axis=0), segments


def building_scenes(count: int, seed: int = 0) -> list[PolyMesh]:
    """A reproducible mix of stepped buildings, L-shapes, boxes and gable houses."""
    rng = np.random.default_rng(seed)
    scenes: list[PolyMesh] = []
    for k in range(count):
        kind = k % 4
        if kind == 0:
            scenes.append(random_building(rng))
        elif kind == 1:
            scenes.append(l_building(size=float(rng.uniform(0.8, 1.2)), height=float(rng.uniform(0.4, 1.0))))
        elif kind == 2:
            scenes.append(box_building(size=rng.uniform(0.4, 1.0, size=3)))
        else:
            scenes.append(gable_house(length=float(rng.uniform(0.8, 1.2)), width=float(rng.uniform(0.4, 0.8))))
    return scenes


SHAPES = {
    "box": box_building,
    "l": l_building,
    "gable": gable_house,
    "sphere": uv_sphere,
}


def make_shape(name: str, **kwargs) -> PolyMesh:
    if name not in SHAPES:
        raise ValueError(f"unknown shape {name!r}; choose from {sorted(SHAPES)}")
    return SHAPES[name](**kwargs)


def scene_names() -> Sequence[str]:
    return sorted(SHAPES)
