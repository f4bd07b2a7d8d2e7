"""
Benchmark helpers: partitioning strategies, λ sweeps, noise robustness.

Each helper returns plain row dataclasses; write_csv turns any list of
rows into a table.
"""

import csv
import logging
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from polyshell.complex import DEFAULT_CELL_BUDGET, build_complex
from polyshell.config import PartitionStrategy, PipelineConfig, ScanConfig
from polyshell.core import Aabb, PolyMesh
from polyshell.errors import CellBudgetExceeded
from polyshell.metrics import hausdorff, watertight_check
from polyshell.mrf import MrfProblem, energy_terms, solve_mincut
from polyshell.pipeline import Reconstructor
from polyshell.primitives import PlanarSegment
from polyshell.providers import MeshSdfOracle
from polyshell.simscan import EVAL_NOISE_LEVELS, scan

logger = logging.getLogger(__name__)


@dataclass
class PartitionRow:
    scene: str
    strategy: str
    primitives: int
    cells: int
    splits: int
    seconds: float
    truncated: bool


def compare_partitioning(
    segment_sets: Sequence[tuple[str, Sequence[PlanarSegment], Aabb]],
    cell_budget: int = DEFAULT_CELL_BUDGET,
    inlier_distance: float = 0.005,
    strategy: Optional[PartitionStrategy] = None,
) -> list[PartitionRow]:
    """
    Partition identical ordered inputs in both modes.

    Args:
        segment_sets: (name, segments, bounds) per scene
        cell_budget: exhaustive runs beyond this many cells are stopped and
            reported as truncated
        inlier_distance: scales the adaptive segment padding
        strategy: ordering and padding settings shared by both modes

    Returns:
        Two rows per scene, adaptive first.
    """
    if not segment_sets:
        raise ValueError("compare_partitioning needs at least one segment set")
    base = strategy or PartitionStrategy()
    rows = []
    for name, segments, bounds in segment_sets:
        for make in (PartitionStrategy.adaptive, PartitionStrategy.exhaustive):
            strat = make(
                aabb_padding=base.aabb_padding,
                segment_padding=base.segment_padding,
                vertical_threshold=base.vertical_threshold,
                vertical_priority=base.vertical_priority,
            )
            t0 = time.perf_counter()
            try:
                cx = build_complex(segments, bounds, strat, inlier_distance, cell_budget=cell_budget)
                cells, splits, truncated = cx.n_cells, cx.split_count, False
            except CellBudgetExceeded as e:
                cells, splits, truncated = e.cells, -1, True
                logger.warning(f"{name}: {strat.mode.value} partition truncated at {e.cells} cells")
            rows.append(PartitionRow(
                scene=name,
                strategy=strat.mode.value,
                primitives=len(segments),
                cells=cells,
                splits=splits,
                seconds=time.perf_counter() - t0,
                truncated=truncated,
            ))
        a, e = rows[-2], rows[-1]
        logger.info(f"{name}: adaptive {a.cells} vs exhaustive {e.cells} cells")
    return rows


@dataclass
class LambdaRow:
    lam: float
    data: float
    smoothness: float
    energy: float
    interior_cells: int


def sweep_lambda(problem: MrfProblem, lambdas: Sequence[float]) -> list[LambdaRow]:
    """Solve one MRF at several smoothness weights."""
    rows = []
    for lam in lambdas:
        p = problem.with_lambda(lam)
        labeling = solve_mincut(p)
        t = energy_terms(p, labeling)
        rows.append(LambdaRow(float(lam), t.data, t.smoothness, t.total, int(labeling.inside.sum())))
    return rows


@dataclass
class NoiseRow:
    sigma: float
    points: int
    segments: int
    cells: int
    faces: int
    watertight: bool
    volume_error: float
    smh: float


def sweep_noise(
    mesh: PolyMesh,
    levels: Sequence[float] = EVAL_NOISE_LEVELS,
    scan_config: Optional[ScanConfig] = None,
    config: Optional[PipelineConfig] = None,
    hausdorff_samples: int = 10_000,
) -> list[NoiseRow]:
    """
    Scan a normalized mesh at each noise level (fractions of R) and reconstruct.

    Uses the mesh itself as the SDF oracle. Tolerances follow
    PipelineConfig.for_noise unless a config is given.
    """
    base_scan = scan_config or ScanConfig()
    oracle = MeshSdfOracle(mesh)
    R = float(mesh.bounds().extent.max())
    rows = []
    for sigma in levels:
        cfg_scan = ScanConfig(**{**asdict(base_scan), "noise_sigma": float(sigma), "noise_relative": True})
        pts = scan(mesh, cfg_scan)
        cfg = config or PipelineConfig.for_noise(sigma * R)
        result = Reconstructor(cfg).run(pts, oracle)
        out = result.mesh
        wt = watertight_check(out)
        vol_err = abs(wt.signed_volume - result.report.interior_volume) / max(result.report.interior_volume, 1e-300)
        smh = float("nan")
        if not out.is_empty():
            smh = hausdorff(out, mesh, n_samples=hausdorff_samples, normalizer=mesh.bounds().diagonal).smh
        rows.append(NoiseRow(
            sigma=float(sigma),
            points=len(pts),
            segments=result.report.n_segments,
            cells=result.report.cell_count,
            faces=result.report.face_count,
            watertight=wt.closed,
            volume_error=float(vol_err),
            smh=smh,
        ))
        logger.info(f"σ={sigma:.3f}R: {rows[-1].faces} faces, watertight={wt.closed}, SMH={smh:.4f}")
    return rows


def write_csv(rows: Sequence, path: Union[str, Path]) -> None:
    if not rows:
        raise ValueError("no rows to write")
    names = [f.name for f in fields(rows[0])]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=names)
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))


def summarize_partitioning(rows: Sequence[PartitionRow]) -> dict:
    """Mean adaptive/exhaustive cell ratio over scenes with both rows complete."""
    by_scene: dict[str, dict[str, PartitionRow]] = {}
    for r in rows:
        by_scene.setdefault(r.scene, {})[r.strategy] = r
    ratios = [
        d["adaptive"].cells / d["exhaustive"].cells
        for d in by_scene.values()
        if "adaptive" in d and "exhaustive" in d and not d["exhaustive"].truncated
    ]
    return {
        "scenes": len(by_scene),
        "mean_ratio": float(np.mean(ratios)) if ratios else float("nan"),
        "max_ratio": float(np.max(ratios)) if ratios else float("nan"),
        "truncated": sum(1 for r in rows if r.truncated),
    }
