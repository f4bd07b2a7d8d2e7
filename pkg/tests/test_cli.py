#!/usr/bin/env python3
"""
Command-line tests: subcommands on small inputs and exit codes.
"""

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from polyshell.buildings import box_building
from polyshell.cli import build_parser, main
from polyshell.meshio import read_points, write_mesh


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A cube, its scan and normalized mesh, shared by the pipeline-style tests."""
    d = tmp_path_factory.mktemp("cli")
    write_mesh(box_building(size=(2.0, 2.0, 2.0)), d / "cube.obj")
    code = main([
        "-q", "scan", str(d / "cube.obj"), "-o", str(d / "scan.ply"),
        "--poses", "12", "--rays-per-side", "40", "--layout", "fibonacci",
        "--normalized-mesh", str(d / "norm.obj"), "--queries", str(d / "queries.csv"),
    ])
    assert code == 0
    return d


class TestUsage:
    def test_no_command(self, capsys):
        assert main([]) == 1

    def test_unknown_option(self):
        with pytest.raises(SystemExit) as info:
            main(["reconstruct", "x.ply", "--bogus"])
        assert info.value.code == 1

    def test_every_command_has_a_parser(self):
        parser = build_parser()
        text = parser.format_help()
        for name in ("scan", "detect", "refine", "partition", "reconstruct", "eval", "bench-partition", "dataset"):
            assert name in text


class TestStages:
    """Stage-by-stage commands."""

    def test_scan_outputs(self, workdir):
        pts = read_points(workdir / "scan.ply")
        assert len(pts) > 1000
        assert abs(pts).max() <= 0.5 + 1e-9
        assert (workdir / "queries.csv").exists()

    def test_detect_refine_partition(self, workdir):
        d = workdir
        assert main(["-q", "detect", str(d / "scan.ply"), "-o", str(d / "raw.json")]) == 0
        assert main(["-q", "refine", str(d / "scan.ply"), str(d / "raw.json"), "-o", str(d / "seg.json")]) == 0
        assert main([
            "-q", "partition", str(d / "scan.ply"), str(d / "seg.json"),
            "-o", str(d / "complex.json"), "--strategy", "exhaustive",
        ]) == 0
        doc = json.loads((d / "complex.json").read_text())
        assert len(doc["cells"]) == 27

    def test_detect_on_mismatched_segments(self, workdir, tmp_path):
        """Segments from another cloud are refused with exit code 2."""
        d = workdir
        main(["-q", "detect", str(d / "scan.ply"), "-o", str(tmp_path / "raw.json")])
        other = tmp_path / "other.xyz"
        pts = read_points(d / "scan.ply")
        other.write_text("\n".join(f"{x} {y} {z}" for x, y, z in pts[::-1]))
        code = main(["-q", "refine", str(other), str(tmp_path / "raw.json"), "-o", str(tmp_path / "seg.json")])
        assert code == 2


class TestReconstruct:
    def test_full_run(self, workdir, tmp_path):
        d = workdir
        out = tmp_path / "out"
        code = main([
            "-q", "reconstruct", str(d / "scan.ply"),
            "--provider", f"oracle:{d / 'norm.obj'}",
            "-o", str(out), "--set", "hausdorff_samples=2000",
        ])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["face_count"] == 6
        assert report["watertight"] is True

    def test_config_file_and_lambda_flag(self, workdir, tmp_path):
        d = workdir
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"provider = oracle:{d / 'norm.obj'}\nhausdorff_samples = 2000\nlambda = 0.5\n")
        out = tmp_path / "out"
        code = main(["-q", "reconstruct", str(d / "scan.ply"), "--config", str(cfg), "-o", str(out), "--lambda", "0.002"])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["config"]["lam"] == 0.002

    def test_bad_provider(self, workdir, tmp_path):
        code = main(["-q", "reconstruct", str(workdir / "scan.ply"), "--provider", "mesh:x.obj", "-o", str(tmp_path)])
        assert code == 2

    def test_missing_provider(self, workdir, tmp_path):
        assert main(["-q", "reconstruct", str(workdir / "scan.ply"), "-o", str(tmp_path)]) == 2

    def test_bad_set(self, workdir, tmp_path):
        code = main(["-q", "reconstruct", str(workdir / "scan.ply"), "--provider", "oracle:x.obj", "--set", "lam"])
        assert code == 2


class TestEval:
    def test_eval_against_reference(self, workdir, tmp_path, capsys):
        d = workdir
        out = tmp_path / "eval.json"
        code = main([
            "-q", "eval", str(d / "norm.obj"), "--reference", str(d / "norm.obj"),
            "--samples", "1000", "--points", str(d / "scan.ply"), "-o", str(out),
        ])
        assert code == 0
        doc = json.loads(out.read_text())
        assert doc["closed"] is True
        assert doc["faces"] == 6
        assert doc["smh"] < 1e-9
        assert doc["points_to_mesh_mean"] < 1e-9

    def test_missing_mesh(self, tmp_path):
        assert main(["-q", "eval", str(tmp_path / "none.obj")]) == 2


class TestBench:
    def test_bench_partition(self, tmp_path):
        table = tmp_path / "bench.csv"
        assert main(["-q", "bench-partition", "--scenes", "2", "-o", str(table)]) == 0
        lines = table.read_text().strip().splitlines()
        assert len(lines) == 1 + 2 * 2


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
