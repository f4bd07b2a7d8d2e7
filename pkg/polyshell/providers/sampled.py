"""
Sampled SDF fields — the import path for externally predicted distances.

Two layouts:
    grid       regular lattice, trilinear interpolation
    scattered  (x, y, z, d) samples, nearest-sample lookup

Queries outside the sampled domain are clamped to the nearest lattice
point / sample and counted (`clamped_queries`), with a warning.

File formats:
    binary grid  header: origin 3×float64, spacing float64, dims 3×uint32
                 (little-endian), then dims.x·dims.y·dims.z float32 values,
                 x fastest
    CSV          lines `x,y,z,d` (optional header line)
"""

import logging
import os
import threading
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.spatial import cKDTree

from polyshell.core import Aabb, as_points
from polyshell.errors import ProviderError
from polyshell.providers.base import BaseSdfProvider, SdfProvider

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

_HEADER = np.dtype([("origin", "<f8", (3,)), ("spacing", "<f8"), ("dims", "<u4", (3,))])


class SampledSdfField(BaseSdfProvider):
    """
    Signed distances stored as samples.

    Usage:
        field = SampledSdfField.grid(origin, spacing, values)    # values[i, j, k]
        field = SampledSdfField.scattered(points, distances)
        field = SampledSdfField.load("prediction.sdf")
    """

    def __init__(
        self,
        values: np.ndarray,
        origin: Optional[np.ndarray] = None,
        spacing: Optional[float] = None,
        points: Optional[np.ndarray] = None,
    ):
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            raise ProviderError("empty SDF field")
        if not np.all(np.isfinite(values)):
            raise ProviderError("SDF field contains non-finite values")
        self.values = values
        self.origin = None if origin is None else np.asarray(origin, dtype=np.float64).reshape(3)
        self.spacing = spacing
        self.points = points
        self._tree = cKDTree(points) if points is not None else None
        self._lock = threading.Lock()
        self.clamped_queries = 0
        if self.is_grid:
            if not (spacing is not None and spacing > 0):
                raise ProviderError("grid spacing must be > 0")
            if values.ndim != 3:
                raise ProviderError(f"grid values must be 3-D, got shape {values.shape}")
            hi = self.origin + spacing * (np.array(values.shape) - 1)
            self.domain = Aabb(self.origin, hi)
        else:
            if points is None or len(points) != len(values):
                raise ProviderError("scattered field needs one point per value")
            self.domain = Aabb.from_points(points)

    @classmethod
    def grid(cls, origin, spacing: float, values: np.ndarray) -> "SampledSdfField":
        return cls(values, origin=origin, spacing=float(spacing))

    @classmethod
    def scattered(cls, points, distances) -> "SampledSdfField":
        pts = as_points(points)
        return cls(np.asarray(distances, dtype=np.float64).reshape(-1), points=pts)

    @classmethod
    def sample_grid(cls, provider: SdfProvider, bounds: Aabb, resolution: int) -> "SampledSdfField":
        """Tabulate another provider on a resolution³-ish lattice covering `bounds`."""
        spacing = float(bounds.extent.max()) / (resolution - 1)
        dims = np.maximum(np.ceil(bounds.extent / spacing).astype(int) + 1, 2)
        axes = [bounds.min[k] + spacing * np.arange(dims[k]) for k in range(3)]
        gx, gy, gz = np.meshgrid(*axes, indexing="ij")
        lattice = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
        values = provider.sdf(lattice).reshape(tuple(dims))
        return cls.grid(bounds.min, spacing, values)

    @property
    def is_grid(self) -> bool:
        return self.origin is not None

    def _note_clamped(self, n: int) -> None:
        if n:
            with self._lock:
                self.clamped_queries += n
            logger.warning(f"{n} SDF queries outside the sampled domain were clamped")

    def sdf(self, points) -> np.ndarray:
        pts = as_points(points)
        outside = ~self.domain.contains(pts, eps=1e-12)
        self._note_clamped(int(outside.sum()))
        if self.is_grid:
            assert self.spacing is not None and self.origin is not None
            idx = (pts - self.origin) / self.spacing
            idx = np.clip(idx, 0, np.array(self.values.shape) - 1)
            return map_coordinates(self.values, idx.T, order=1, mode="nearest")
        assert self._tree is not None
        _, nearest = self._tree.query(pts)
        return self.values[nearest]

    # === I/O ===

    def save(self, path: PathLike) -> None:
        if Path(path).suffix.lower() == ".csv":
            if self.is_grid:
                raise ProviderError("grid fields are saved in the binary format")
            assert self.points is not None
            table = np.column_stack([self.points, self.values])
            np.savetxt(path, table, delimiter=",", fmt="%.17g", header="x,y,z,d", comments="")
            return
        if not self.is_grid:
            raise ProviderError("scattered fields are saved as CSV")
        header = np.zeros(1, dtype=_HEADER)
        header["origin"] = self.origin
        header["spacing"] = self.spacing
        header["dims"] = self.values.shape
        with open(path, "wb") as fh:
            fh.write(header.tobytes())
            # x fastest: Fortran order of values[i, j, k]
            fh.write(np.asarray(self.values, dtype="<f4").ravel(order="F").tobytes())

    @classmethod
    def load(cls, path: PathLike) -> "SampledSdfField":
        if Path(path).suffix.lower() == ".csv":
            try:
                table = np.loadtxt(path, delimiter=",", ndmin=2, comments="#", skiprows=_header_rows(path))
            except ValueError as e:
                raise ProviderError(f"{path}: unreadable SDF samples: {e}") from e
            if table.shape[1] < 4:
                raise ProviderError(f"{path}: expected x,y,z,d columns")
            return cls.scattered(table[:, :3], table[:, 3])
        raw = Path(path).read_bytes()
        if len(raw) < _HEADER.itemsize:
            raise ProviderError(f"{path}: truncated SDF grid header")
        header = np.frombuffer(raw, dtype=_HEADER, count=1)[0]
        dims = tuple(int(d) for d in header["dims"])
        if min(dims) <= 0:
            raise ProviderError(f"{path}: bad grid dimensions {dims}")
        count = dims[0] * dims[1] * dims[2]
        size = len(raw) - _HEADER.itemsize
        if size != 4 * count:
            raise ProviderError(f"{path}: expected {count} float32 values ({4 * count} bytes), found {size} bytes")
        body = np.frombuffer(raw, dtype="<f4", offset=_HEADER.itemsize)
        values = body.reshape(dims, order="F").astype(np.float64)
        return cls.grid(header["origin"], float(header["spacing"]), values)


def _header_rows(path: PathLike) -> int:
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(x) for x in first.split(",")]
        return 0
    except ValueError:
        return 1
