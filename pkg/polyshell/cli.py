#!/usr/bin/env python3
"""
polyshell CLI

Usage:
    polyshell scan MESH -o POINTS [--queries CSV] [--sigma S] [--hemisphere] [--poses N]
    polyshell detect POINTS -o SEGMENTS [--inlier-distance D] [--min-support N]
    polyshell refine POINTS SEGMENTS -o SEGMENTS [--angle DEG] [--distance D]
    polyshell partition POINTS SEGMENTS -o COMPLEX [--strategy adaptive|exhaustive]
    polyshell reconstruct POINTS --provider oracle:<mesh>|sdf:<file> [-o DIR]
                          [--lambda L] [--beta B] [--no-bottom-walls] [--config FILE] [--set KEY=VALUE]
    polyshell eval MESH [--reference MESH] [--points POINTS] [-o REPORT]
    polyshell bench-partition [--scenes N] [--budget CELLS] [-o TABLE]
    polyshell dataset MESH [MESH...] -o DIR

Exit codes: 0 success, 1 usage error, 2 stage failure.
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from polyshell.config import PartitionStrategy, PipelineConfig, RansacParams, RefineParams, ScanConfig
from polyshell.errors import PipelineError, PolyshellError

logger = logging.getLogger("polyshell")

PRESETS = {
    "default": PipelineConfig.default,
    "full-view": PipelineConfig.full_view,
    "no-bottom": PipelineConfig.no_bottom,
    "noisy": PipelineConfig.noisy,
}


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def cmd_scan(args):
    """Scan a mesh with the virtual LiDAR."""
    from polyshell.meshio import read_mesh, write_mesh, write_points
    from polyshell.simscan import normalize_mesh, sample_queries, scan

    mesh = read_mesh(args.mesh)
    scale = None
    if args.normalize:
        mesh, scale = normalize_mesh(mesh)
        if args.normalized_mesh:
            write_mesh(mesh, args.normalized_mesh)
    cfg = ScanConfig(
        poses=args.poses,
        rays_per_side=args.rays_per_side,
        hemisphere_only=args.hemisphere,
        noise_sigma=args.sigma,
        pose_layout=args.layout,
        seed=args.seed,
    )
    points = scan(mesh, cfg)
    write_points(points, args.output)
    print(f"✓ {len(points)} points → {args.output}")
    if args.queries:
        queries = sample_queries(mesh, scale, seed=args.seed)
        queries.save_csv(args.queries)
        print(f"✓ {len(queries)} query points → {args.queries}")


def cmd_detect(args):
    """Detect planar segments."""
    from polyshell.meshio import read_points
    from polyshell.primitives import detect_planes, save_segments

    points = read_points(args.points)
    params = RansacParams(
        inlier_distance=args.inlier_distance,
        min_support=args.min_support,
        normal_consistency=args.normal_consistency,
        seed=args.seed,
    )
    segments = detect_planes(points, params)
    save_segments(segments, args.output, points)
    print(f"✓ {len(segments)} segments → {args.output}")


def cmd_refine(args):
    """Merge near-coplanar segments."""
    from polyshell.meshio import read_points
    from polyshell.primitives import load_segments, refine_planes, save_segments

    points = read_points(args.points)
    segments = load_segments(args.segments, points)
    params = RefineParams(angle_tolerance=math.radians(args.angle), distance_tolerance=args.distance)
    refined = refine_planes(points, segments, params)
    save_segments(refined, args.output, points)
    print(f"✓ {len(segments)} → {len(refined)} segments → {args.output}")


def cmd_partition(args):
    """Build the cell complex."""
    from polyshell.complex import bounds_for_points, build_complex, save_complex
    from polyshell.meshio import read_points
    from polyshell.primitives import load_segments

    points = read_points(args.points)
    segments = load_segments(args.segments, points)
    strategy = PartitionStrategy(mode=args.strategy, aabb_padding=args.padding)
    used = [s.inliers for s in segments if s.support]
    support = points[np.unique(np.concatenate(used))] if used else points
    bounds = bounds_for_points(support, strategy.aabb_padding)
    cx = build_complex(
        segments,
        bounds,
        strategy,
        inlier_distance=args.inlier_distance,
        use_bounds_faces=not args.no_bottom_walls,
        cell_budget=args.budget,
    )
    save_complex(cx, args.output)
    print(f"✓ {cx.n_cells} cells, {cx.graph.number_of_edges()} adjacencies, {cx.split_count} splits → {args.output}")


def _pipeline_config(args) -> PipelineConfig:
    cfg = PRESETS[args.preset]()
    if args.config:
        cfg = PipelineConfig.from_file(args.config, base=cfg)
    overrides: dict = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise PolyshellError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = value.strip()
    overrides.update({
        "input_path": args.points,
        "provider": args.provider,
        "output_dir": args.output,
        "reference_mesh": args.reference,
        "lam": args.lam,
        "beta": args.beta,
        "strategy.mode": args.strategy,
        "workers": args.workers,
    })
    if args.no_bottom_walls:
        overrides["use_bounds_faces"] = False
    if args.no_merge:
        overrides["merge_faces"] = False
    cfg = cfg.with_overrides(**overrides)
    if not cfg.provider:
        raise PolyshellError("reconstruct needs --provider (or `provider = ...` in the config file)")
    return cfg


def cmd_reconstruct(args):
    """Run the full pipeline."""
    from polyshell.pipeline import run_pipeline

    cfg = _pipeline_config(args)
    result = run_pipeline(cfg)
    r = result.report
    print(f"✓ {r.face_count} faces ({r.face_count_raw} before merging), {r.cell_count} cells")
    print(f"  watertight: {r.watertight}  boundary edges: {r.boundary_edges}  non-manifold edges: {r.nonmanifold_edges}")
    if r.smh is not None:
        print(f"  SMH: {r.smh:.4%} of bbox diagonal (max {r.hausdorff_max:.4%})")
    print(f"  mesh → {result.artifacts['mesh']}")


def cmd_eval(args):
    """Watertightness and SMH of a mesh."""
    from polyshell.meshio import read_mesh, read_points
    from polyshell.metrics import atomic_write_text, hausdorff, watertight_check

    mesh = read_mesh(args.mesh)
    wt = watertight_check(mesh)
    doc: dict = {"faces": mesh.n_faces, **wt.to_dict()}
    if args.reference:
        ref = read_mesh(args.reference)
        h = hausdorff(mesh, ref, n_samples=args.samples, seed=args.seed, normalizer=ref.bounds().diagonal)
        doc.update({"smh": h.smh, "hausdorff_max": h.max})
    if args.points:
        pts = read_points(args.points)
        h = hausdorff(pts, mesh, n_samples=args.samples, normalizer=mesh.bounds().diagonal)
        doc.update({"points_to_mesh_mean": h.smh, "points_to_mesh_max": h.max})
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.output:
        atomic_write_text(args.output, text + "\n")
    print(text)


def cmd_bench_partition(args):
    """Adaptive vs exhaustive partitioning on generated buildings."""
    from polyshell.benchmark import compare_partitioning, summarize_partitioning, write_csv
    from polyshell.buildings import building_scenes, segments_from_mesh
    from polyshell.complex import bounds_for_points

    rng = np.random.default_rng(args.seed)
    sets = []
    for k, mesh in enumerate(building_scenes(args.scenes, seed=args.seed)):
        points, segments = segments_from_mesh(mesh, rng=rng)
        sets.append((f"scene{k:03d}", segments, bounds_for_points(points, 0.05)))
    rows = compare_partitioning(sets, cell_budget=args.budget)
    if args.output:
        write_csv(rows, args.output)
    print(f"{'scene':10} {'strategy':11} {'prims':>5} {'cells':>8} {'splits':>8} {'secs':>8}")
    for r in rows:
        flag = " (truncated)" if r.truncated else ""
        print(f"{r.scene:10} {r.strategy:11} {r.primitives:5d} {r.cells:8d} {r.splits:8d} {r.seconds:8.3f}{flag}")
    s = summarize_partitioning(rows)
    print(f"\nmean adaptive/exhaustive cell ratio: {s['mean_ratio']:.3f} over {s['scenes']} scenes")


def cmd_dataset(args):
    """Scans and query sets for a mesh corpus."""
    from polyshell.simscan import build_dataset

    cfg = ScanConfig(poses=args.poses, rays_per_side=args.rays_per_side, hemisphere_only=args.hemisphere)
    manifest = build_dataset(args.meshes, args.output, seed=args.seed, scan_config=cfg)
    print(f"✓ {len(manifest['entries'])} meshes → {Path(args.output) / 'manifest.json'}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="polyshell",
        description="polyshell: compact watertight building models from point clouds",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="Warnings only")

    subparsers = parser.add_subparsers(dest="command", help="Commands")

    # scan
    scan_parser = subparsers.add_parser("scan", help="Virtual LiDAR scan of a mesh")
    scan_parser.add_argument("mesh", help="Watertight mesh (.obj/.ply)")
    scan_parser.add_argument("-o", "--output", required=True, help="Point cloud (.ply/.xyz)")
    scan_parser.add_argument("--queries", help="Also write SDF-labeled queries (CSV)")
    scan_parser.add_argument("--poses", type=int, default=24)
    scan_parser.add_argument("--rays-per-side", type=int, default=128)
    scan_parser.add_argument("--sigma", type=float, default=0.0, help="Depth noise, fraction of R")
    scan_parser.add_argument("--hemisphere", action="store_true", help="Upper-hemisphere poses only")
    scan_parser.add_argument("--layout", choices=["random", "fibonacci"], default="random")
    scan_parser.add_argument("--seed", type=int, default=0)
    scan_parser.add_argument("--no-normalize", dest="normalize", action="store_false",
                             help="Scan the mesh in its own units")
    scan_parser.add_argument("--normalized-mesh", help="Write the normalized mesh here")

    # detect
    det_parser = subparsers.add_parser("detect", help="RANSAC plane detection")
    det_parser.add_argument("points")
    det_parser.add_argument("-o", "--output", required=True, help="Segments (JSON)")
    det_parser.add_argument("--inlier-distance", type=float, default=RansacParams.inlier_distance)
    det_parser.add_argument("--min-support", type=int, default=RansacParams.min_support)
    det_parser.add_argument("--normal-consistency", type=float, default=RansacParams.normal_consistency)
    det_parser.add_argument("--seed", type=int, default=0)

    # refine
    ref_parser = subparsers.add_parser("refine", help="Merge near-coplanar segments")
    ref_parser.add_argument("points")
    ref_parser.add_argument("segments")
    ref_parser.add_argument("-o", "--output", required=True)
    ref_parser.add_argument("--angle", type=float, default=5.0, help="θ in degrees")
    ref_parser.add_argument("--distance", type=float, default=RefineParams.distance_tolerance, help="ε")

    # partition
    part_parser = subparsers.add_parser("partition", help="Build the BSP cell complex")
    part_parser.add_argument("points")
    part_parser.add_argument("segments")
    part_parser.add_argument("-o", "--output", required=True, help="Complex (JSON)")
    part_parser.add_argument("--strategy", choices=["adaptive", "exhaustive"], default="adaptive")
    part_parser.add_argument("--padding", type=float, default=0.05, help="AABB padding fraction")
    part_parser.add_argument("--inlier-distance", type=float, default=RansacParams.inlier_distance)
    part_parser.add_argument("--budget", type=int, default=1_000_000, help="Cell budget")
    part_parser.add_argument("--no-bottom-walls", action="store_true", help="Do not insert the AABB walls")

    # reconstruct
    rec_parser = subparsers.add_parser("reconstruct", help="Full pipeline")
    rec_parser.add_argument("points")
    rec_parser.add_argument("--provider", help="oracle:<mesh> or sdf:<file>")
    rec_parser.add_argument("-o", "--output", help="Output directory")
    rec_parser.add_argument("--config", help="key = value config file")
    rec_parser.add_argument("--preset", choices=sorted(PRESETS), default="default")
    rec_parser.add_argument("--set", action="append", metavar="KEY=VALUE", help="Override a config key")
    rec_parser.add_argument("--lambda", dest="lam", type=float, help="Smoothness weight λ")
    rec_parser.add_argument("--beta", type=float, help="Occupancy gain β")
    rec_parser.add_argument("--strategy", choices=["adaptive", "exhaustive"])
    rec_parser.add_argument("--reference", help="Ground-truth mesh for SMH")
    rec_parser.add_argument("--no-bottom-walls", action="store_true",
                            help="No AABB wall faces; wall-touching cells are forced out")
    rec_parser.add_argument("--no-merge", action="store_true", help="Skip coplanar face merging")
    rec_parser.add_argument("--workers", type=int)

    # eval
    eval_parser = subparsers.add_parser("eval", help="Watertightness and SMH report")
    eval_parser.add_argument("mesh")
    eval_parser.add_argument("--reference", help="Ground-truth mesh (symmetric SMH)")
    eval_parser.add_argument("--points", help="Point cloud (points → mesh distances)")
    eval_parser.add_argument("--samples", type=int, default=100_000)
    eval_parser.add_argument("--seed", type=int, default=0)
    eval_parser.add_argument("-o", "--output", help="Report (JSON)")

    # bench-partition
    bench_parser = subparsers.add_parser("bench-partition", help="Adaptive vs exhaustive partitioning")
    bench_parser.add_argument("--scenes", type=int, default=20)
    bench_parser.add_argument("--seed", type=int, default=0)
    bench_parser.add_argument("--budget", type=int, default=1_000_000)
    bench_parser.add_argument("-o", "--output", help="Table (CSV)")

    # dataset
    data_parser = subparsers.add_parser("dataset", help="Scan a mesh corpus")
    data_parser.add_argument("meshes", nargs="+")
    data_parser.add_argument("-o", "--output", required=True, help="Output directory")
    data_parser.add_argument("--poses", type=int, default=24)
    data_parser.add_argument("--rays-per-side", type=int, default=128)
    data_parser.add_argument("--hemisphere", action="store_true")
    data_parser.add_argument("--seed", type=int, default=0)

    return parser


COMMANDS = {
    "scan": cmd_scan,
    "detect": cmd_detect,
    "refine": cmd_refine,
    "partition": cmd_partition,
    "reconstruct": cmd_reconstruct,
    "eval": cmd_eval,
    "bench-partition": cmd_bench_partition,
    "dataset": cmd_dataset,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command is None:
        parser.print_help()
        return 1

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(message)s")

    try:
        COMMANDS[args.command](args)
    except PipelineError as e:
        print(f"✗ stage {e.stage} failed: {e.cause}", file=sys.stderr)
        if e.inputs:
            print(f"  inputs: {json.dumps(e.inputs, default=str)}", file=sys.stderr)
        return 2
    except (PolyshellError, OSError, ValueError) as e:
        print(f"✗ {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
