"""
Base signed-distance provider protocol.

All SDF sources (exact mesh oracle, sampled fields written by an external
predictor) implement this interface. Sign convention: positive inside the
surface, negative outside.
"""

from abc import ABC, abstractmethod
from typing import Protocol, runtime_checkable

import numpy as np


@runtime_checkable
class SdfProvider(Protocol):
    """
    Protocol for signed-distance providers.

    Implementations must provide:
    - sdf(): signed distances for a batch of points
    - sdf_at(): signed distance of a single point
    - exact: whether values are true distances (1-Lipschitz)

    Implementations must be safe for concurrent read-only queries.
    """

    @property
    def exact(self) -> bool:
        ...

    def sdf(self, points: np.ndarray) -> np.ndarray:
        """
        Signed distances.

        Args:
            points: (n, 3) query points

        Returns:
            (n,) distances, positive inside
        """
        ...

    def sdf_at(self, point) -> float:
        ...


class BaseSdfProvider(ABC):
    """
    Base class for SDF providers with common functionality.
    """

    _exact: bool = False

    @property
    def exact(self) -> bool:
        return self._exact

    @abstractmethod
    def sdf(self, points: np.ndarray) -> np.ndarray:
        """Signed distances for a batch of points."""
        pass

    def sdf_at(self, point) -> float:
        """Single-point query. Override for point-specific behavior."""
        return float(self.sdf(np.asarray(point, dtype=np.float64).reshape(1, 3))[0])
