"""
polyshell — compact watertight polygonal building models from point clouds.

Usage:
    from polyshell import PipelineConfig, run_pipeline

    cfg = PipelineConfig(input_path="scan.ply", provider="oracle:building.obj")
    result = run_pipeline(cfg)
    result.mesh            # merged polygon mesh
    result.report          # ReconReport (faces, cells, watertight, SMH)

    # In memory, with any SDF provider
    from polyshell import Reconstructor
    from polyshell.providers import MeshSdfOracle

    result = Reconstructor(PipelineConfig.no_bottom()).run(points, MeshSdfOracle(reference))

    # Synthetic data
    from polyshell.buildings import l_building
    from polyshell.simscan import normalize_mesh, scan

    mesh, scale = normalize_mesh(l_building())
    points = scan(mesh)
"""

from polyshell.complex import CellComplex, build_complex, plan_insertion
from polyshell.config import (
    PartitionMode,
    PartitionStrategy,
    PipelineConfig,
    RansacParams,
    RefineParams,
    ScanConfig,
)
from polyshell.core import Aabb, Plane, PolyMesh, Side
from polyshell.errors import (
    CellBudgetExceeded,
    ConfigError,
    GeometryError,
    MeshError,
    PipelineError,
    PolyshellError,
    ProviderError,
    ScanError,
)
from polyshell.metrics import ReconReport, hausdorff, watertight_check
from polyshell.mrf import Labeling, MrfProblem, build_mrf, energy, solve_mincut
from polyshell.occupancy import cell_occupancy
from polyshell.pipeline import Reconstructor, ReconResult, run_pipeline
from polyshell.primitives import PlanarSegment, detect_planes, refine_planes
from polyshell.shell import Shell, extract_shell, merge_coplanar

__all__ = [
    "Aabb",
    "CellBudgetExceeded",
    "CellComplex",
    "ConfigError",
    "GeometryError",
    "Labeling",
    "MeshError",
    "MrfProblem",
    "PartitionMode",
    "PartitionStrategy",
    "PipelineConfig",
    "PipelineError",
    "PlanarSegment",
    "Plane",
    "PolyMesh",
    "PolyshellError",
    "ProviderError",
    "RansacParams",
    "ReconReport",
    "ReconResult",
    "Reconstructor",
    "RefineParams",
    "ScanConfig",
    "ScanError",
    "Shell",
    "Side",
    "build_complex",
    "build_mrf",
    "cell_occupancy",
    "detect_planes",
    "energy",
    "extract_shell",
    "hausdorff",
    "merge_coplanar",
    "plan_insertion",
    "refine_planes",
    "run_pipeline",
    "solve_mincut",
    "watertight_check",
]
__version__ = "0.4.0"
