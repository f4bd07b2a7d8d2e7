"""
Exception hierarchy.

Argument checks raise plain ValueError with a descriptive message.
The typed errors below exist for the places where callers need to branch
(the pipeline maps any PolyshellError to CLI exit code 2).
"""

from typing import Optional


class PolyshellError(Exception):
    """Base class for all library errors."""


class GeometryError(PolyshellError):
    """Non-finite coordinates, degenerate or unbounded cells, collinear fits."""


class ConfigError(PolyshellError, ValueError):
    """Invalid parameter value or unreadable config file."""


class MeshError(PolyshellError):
    """Malformed mesh file, or an open mesh where a closed one is required."""


class ProviderError(PolyshellError):
    """An SDF provider failed (or returned non-finite values) for a cell."""

    def __init__(self, message: str, cell_index: Optional[int] = None):
        super().__init__(message)
        self.cell_index = cell_index


class ScanError(PolyshellError):
    """Virtual scan produced no points."""


class CellBudgetExceeded(PolyshellError):
    """Partitioning produced more cells than the configured budget."""

    def __init__(self, budget: int, cells: int, inserted: int):
        super().__init__(
            f"cell budget {budget} exceeded ({cells} cells after {inserted} insertions)"
        )
        self.budget = budget
        self.cells = cells
        self.inserted = inserted


class PipelineError(PolyshellError):
    """A pipeline stage failed. Carries the stage name and an input manifest."""

    def __init__(self, stage: str, cause: BaseException, inputs: Optional[dict] = None):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
        self.inputs = inputs or {}
