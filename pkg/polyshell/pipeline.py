"""
Reconstruction Pipeline — point cloud to compact watertight mesh

Stages:
    detect     RANSAC planar segments
    refine     merge near-coplanar segments
    partition  bounds (+ walls) and the BSP cell complex
    occupancy  SDF at each cell centroid → o_i
    label      MRF graph cut → in/out per cell
    extract    outer shell of the interior cells
    merge      coplanar face merging
    metrics    watertightness, SMH against a reference

Usage:
    from polyshell import PipelineConfig, run_pipeline

    cfg = PipelineConfig(input_path="scan.ply", provider="oracle:building.obj")
    result = run_pipeline(cfg)
    print(result.report.face_count, result.report.watertight)

Reconstructor runs the same stages on in-memory inputs without touching
the filesystem.
"""

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Union

import numpy as np

from polyshell.complex import CellComplex, bounds_for_points, build_complex, save_complex
from polyshell.config import PipelineConfig
from polyshell.core import PolyMesh, as_points
from polyshell.errors import PipelineError
from polyshell.meshio import read_mesh, read_points, write_mesh
from polyshell.metrics import ReconReport, hausdorff, watertight_check
from polyshell.mrf import Labeling, MrfProblem, build_mrf, energy_terms, save_labeling, solve_mincut
from polyshell.occupancy import CellOccupancy, complex_occupancy
from polyshell.primitives import PlanarSegment, detect_planes, refine_planes, save_segments
from polyshell.providers import MeshSdfOracle, SdfProvider, parse_provider_spec, resolve_provider
from polyshell.shell import MergeResult, Shell, extract_shell, merge_faces

logger = logging.getLogger(__name__)

STAGES = ("load", "detect", "refine", "partition", "occupancy", "label", "extract", "merge", "metrics", "persist")


@dataclass(eq=False)
class ReconResult:
    """Everything a run produced, stage by stage."""

    report: ReconReport
    segments_raw: list[PlanarSegment] = field(default_factory=list)
    segments: list[PlanarSegment] = field(default_factory=list)
    complex: Optional[CellComplex] = None
    occupancy: Optional[CellOccupancy] = None
    problem: Optional[MrfProblem] = None
    labeling: Optional[Labeling] = None
    shell: Optional[Shell] = None
    merged: Optional[MergeResult] = None
    artifacts: dict[str, Path] = field(default_factory=dict)

    @property
    def mesh(self) -> PolyMesh:
        """Final mesh (merged unless merging was off)."""
        if self.merged is not None:
            return self.merged.mesh
        return self.shell.mesh if self.shell is not None else PolyMesh()


@contextmanager
def _stage(name: str, timings: dict[str, float], inputs: Optional[dict] = None) -> Iterator[None]:
    t0 = time.perf_counter()
    try:
        yield
    except PipelineError:
        raise
    except Exception as e:
        logger.error(f"stage {name} failed: {e}")
        raise PipelineError(name, e, inputs) from e
    finally:
        timings[name] = time.perf_counter() - t0
    logger.debug(f"stage {name}: {timings[name]:.3f}s")


class Reconstructor:
    """
    In-memory pipeline.

    Usage:
        rec = Reconstructor(PipelineConfig.no_bottom())
        result = rec.run(points, MeshSdfOracle(reference))
    """

    def __init__(self, config: Optional[PipelineConfig] = None):
        self.config = config or PipelineConfig()

    def run(
        self,
        points,
        provider: SdfProvider,
        reference: Optional[PolyMesh] = None,
    ) -> ReconResult:
        cfg = self.config
        timings: dict[str, float] = {}
        # where results go and how many threads ran do not change them
        settings = {k: v for k, v in cfg.to_dict().items() if k not in ("output_dir", "workers")}
        report = ReconReport(config=settings, timings=timings)
        result = ReconResult(report)

        with _stage("detect", timings, {"points": len(points)}):
            pts = as_points(points)
            report.n_points = len(pts)
            result.segments_raw = detect_planes(pts, cfg.ransac)
            report.n_segments_raw = len(result.segments_raw)

        with _stage("refine", timings, {"segments": report.n_segments_raw}):
            result.segments = refine_planes(pts, result.segments_raw, cfg.refine)
            report.n_segments = len(result.segments)

        with _stage("partition", timings, {"segments": report.n_segments, "mode": cfg.strategy.mode.value}):
            used = [s.inliers for s in result.segments if s.support]
            support = pts[np.unique(np.concatenate(used))] if used else pts
            bounds = bounds_for_points(support, cfg.strategy.aabb_padding)
            cx = build_complex(
                result.segments,
                bounds,
                cfg.strategy,
                inlier_distance=cfg.ransac.inlier_distance,
                use_bounds_faces=cfg.use_bounds_faces,
            )
            result.complex = cx
            report.cell_count = cx.n_cells
            report.adjacency_count = cx.graph.number_of_edges()

        with _stage("occupancy", timings, {"cells": cx.n_cells}):
            result.occupancy = complex_occupancy(cx, provider, beta=cfg.beta, workers=cfg.workers)

        with _stage("label", timings, {"cells": cx.n_cells, "lambda": cfg.lam}):
            forced: list[int] = []
            if not cfg.use_bounds_faces:
                forced = [i for i, walls in enumerate(cx.boundary_flags) if walls]
            result.problem = build_mrf(cx, result.occupancy, lam=cfg.lam, forced_out=forced)
            result.labeling = solve_mincut(result.problem)
            terms = energy_terms(result.problem, result.labeling)
            report.energy = {"D": terms.data, "V": terms.smoothness, "E": terms.total}
            report.interior_cells = int(result.labeling.inside.sum())

        with _stage("extract", timings, {"interior_cells": report.interior_cells}):
            result.shell = extract_shell(cx, result.labeling)
            report.face_count_raw = result.shell.n_faces
            report.interior_volume = result.shell.interior_volume

        with _stage("merge", timings, {"faces": report.face_count_raw}):
            if cfg.merge_faces:
                result.merged = merge_faces(result.shell.mesh)
                report.unmerged_groups = len(result.merged.flagged)
            report.face_count = result.mesh.n_faces

        with _stage("metrics", timings, {"faces": report.face_count}):
            wt = watertight_check(result.mesh)
            report.watertight = wt.closed
            report.boundary_edges = wt.boundary_edges
            report.nonmanifold_edges = wt.nonmanifold_edges
            report.signed_volume = wt.signed_volume
            if reference is not None and not result.mesh.is_empty():
                h = hausdorff(
                    result.mesh,
                    reference,
                    n_samples=cfg.hausdorff_samples,
                    seed=cfg.hausdorff_seed,
                    normalizer=reference.bounds().diagonal,
                )
                report.smh, report.hausdorff_max = h.smh, h.max

        logger.info(
            f"Reconstruction: {report.face_count} faces ({report.face_count_raw} before merging), "
            f"{report.cell_count} cells, watertight={report.watertight}"
            + (f", SMH={report.smh:.3%}" if report.smh is not None else "")
        )
        return result


def _reference_mesh(config: PipelineConfig) -> Optional[PolyMesh]:
    if config.reference_mesh:
        return read_mesh(config.reference_mesh)
    kind, path = parse_provider_spec(config.provider)
    return read_mesh(path) if kind == "oracle" else None


def run_pipeline(config: PipelineConfig, provider: Optional[SdfProvider] = None) -> ReconResult:
    """
    Run every stage from files and persist all intermediates in config.output_dir.

    Artifacts: segments_raw.json, segments.json, complex.json, labeling.json,
    shell_raw.ply, mesh.obj, report.json (deterministic) and timings.json.

    Raises:
        PipelineError: a stage failed; carries the stage name and its inputs
    """
    timings: dict[str, float] = {}
    out = Path(config.output_dir)
    with _stage("load", timings, {"input": config.input_path, "provider": config.provider}):
        out.mkdir(parents=True, exist_ok=True)
        points = read_points(config.input_path)
        if provider is None:
            provider = resolve_provider(config.provider)
        reference = _reference_mesh(config) if config.provider or config.reference_mesh else None
        if reference is None and isinstance(provider, MeshSdfOracle):
            reference = provider.mesh

    result = Reconstructor(config).run(points, provider, reference)
    result.report.timings = {**timings, **result.report.timings}

    artifacts = {
        "segments_raw": out / "segments_raw.json",
        "segments": out / "segments.json",
        "complex": out / "complex.json",
        "labeling": out / "labeling.json",
        "shell_raw": out / "shell_raw.ply",
        "mesh": out / "mesh.obj",
        "report": out / "report.json",
        "timings": out / "timings.json",
    }
    with _stage("persist", result.report.timings, {"output_dir": str(out)}):
        save_segments(result.segments_raw, artifacts["segments_raw"], points)
        save_segments(result.segments, artifacts["segments"], points)
        save_complex(result.complex, artifacts["complex"])
        save_labeling(artifacts["labeling"], result.problem, result.labeling, result.occupancy.values)
        write_mesh(result.shell.mesh, artifacts["shell_raw"])
        write_mesh(result.mesh, artifacts["mesh"])
        result.report.save(artifacts["report"], artifacts["timings"])
    result.artifacts = artifacts
    logger.info(f"Artifacts written to {out}")
    return result


def reconstruct(
    points,
    provider: Union[str, SdfProvider],
    config: Optional[PipelineConfig] = None,
    reference: Optional[PolyMesh] = None,
) -> PolyMesh:
    """Shortcut: final mesh of an in-memory run."""
    return Reconstructor(config).run(points, resolve_provider(provider), reference).mesh
