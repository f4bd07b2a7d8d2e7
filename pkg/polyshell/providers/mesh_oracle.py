"""
Exact SDF of a watertight reference mesh.

Magnitude: distance to the closest triangle, found through trimesh's
R-tree over triangle boxes (exact to floating point). Sign: trimesh's ray
containment test, which re-casts in the opposite direction when a ray
grazes an edge or vertex.

Used as ground truth for synthetic scenes and as the oracle provider of the
reconstruction pipeline.
"""

import logging

import numpy as np
import trimesh

from polyshell.core import PolyMesh, as_points, boundary_edge_count
from polyshell.errors import MeshError
from polyshell.providers.base import BaseSdfProvider

logger = logging.getLogger(__name__)


class MeshSdfOracle(BaseSdfProvider):
    """
    Signed distance to a closed triangle/polygon mesh.

    Usage:
        oracle = MeshSdfOracle(read_mesh("building.obj"))
        d = oracle.sdf(points)      # positive inside
    """

    _exact = True

    def __init__(self, mesh: PolyMesh, surface_eps: float = 1e-12):
        """
        Args:
            mesh: closed, outward-oriented mesh
            surface_eps: points closer than this (× bbox diagonal) count as on the surface

        Raises:
            MeshError: the mesh is empty or has boundary edges
        """
        if mesh.is_empty():
            raise MeshError("SDF oracle needs a non-empty mesh")
        open_edges = boundary_edge_count(mesh.faces)
        if open_edges:
            raise MeshError(f"mesh is not closed ({open_edges} boundary edges); inside/outside is undefined")
        self.mesh = mesh
        self.tm = mesh.to_trimesh()
        self.bounds = mesh.bounds()
        self.surface_eps = surface_eps * max(self.bounds.diagonal, 1e-300)
        # trimesh builds these lazily; build them now so worker threads only read
        _ = self.tm.triangles_tree
        _ = self.tm.ray
        self._proximity = trimesh.proximity.ProximityQuery(self.tm)
        logger.debug(f"SDF oracle over {len(self.tm.faces)} triangles")

    def unsigned(self, points) -> np.ndarray:
        pts = as_points(points)
        if len(pts) == 0:
            return np.zeros(0)
        _, d, _ = self._proximity.on_surface(pts)
        return np.asarray(d, dtype=np.float64)

    def inside(self, points) -> np.ndarray:
        pts = as_points(points)
        out = np.zeros(len(pts), dtype=bool)
        # only points inside the bbox can be inside the mesh
        candidates = np.flatnonzero(self.bounds.contains(pts))
        if len(candidates):
            out[candidates] = self.tm.contains(pts[candidates])
        return out

    def sdf(self, points) -> np.ndarray:
        pts = as_points(points)
        if len(pts) == 0:
            return np.zeros(0)
        d = self.unsigned(pts)
        out = np.where(self.inside(pts), d, -d)
        # on the surface: +0
        out[d <= self.surface_eps] = 0.0
        return out
