"""
Cell Complex — adaptive binary space partitioning

The bounding box is split by the supporting planes of the primitives, one
primitive at a time, in priority order:

    1. vertical planes (𝒱 = 1 − |n_z| > 0.9) before all others
    2. within each class, more supporting points first
    3. ties by input position

Adaptive mode only splits leaf cells whose bounding box meets the
primitive's padded inlier box (a primitive far away leaves a cell alone
even if its infinite plane crosses it). Exhaustive mode splits every cell
the plane crosses, giving the full plane arrangement.

Cell adjacency lives in a networkx graph over leaf ids (the way the BSP
literature keeps it): when cell C splits into D and E, D–E gets the cut
face, and every record A–C is clipped by the plane into A–D and A–E.
"""

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import networkx as nx
import numpy as np

from polyshell.config import PartitionMode, PartitionStrategy
from polyshell.core import WALL_NAMES, Aabb, Plane, Side, Tolerance, polygon_area, split_polygon
from polyshell.errors import CellBudgetExceeded, GeometryError
from polyshell.polytope import ConvexCell, SplitKind, clip_cell, wall_tag
from polyshell.primitives import PlanarSegment

logger = logging.getLogger(__name__)

DEFAULT_CELL_BUDGET = 1_000_000


# === Insertion order ===

@dataclass(frozen=True)
class PriorityRecord:
    index: int
    verticality: float
    support: int
    vertical: bool


@dataclass
class InsertionPlan:
    """Segments in insertion order with the record each was ranked by."""

    segments: list[PlanarSegment]
    records: list[PriorityRecord]

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def order(self) -> list[int]:
        return [r.index for r in self.records]


def plan_insertion(
    segments: Sequence[PlanarSegment],
    strategy: Optional[PartitionStrategy] = None,
) -> InsertionPlan:
    """
    Order segments for insertion.

    Vertical segments (verticality above the strategy threshold) come first
    unless strategy.vertical_priority is off; each class is sorted by
    descending support, ties by input position. Virtual segments go last.
    """
    strategy = strategy or PartitionStrategy()
    records = []
    for i, seg in enumerate(segments):
        v = seg.plane.verticality
        records.append(PriorityRecord(i, v, seg.support, v > strategy.vertical_threshold))

    def key(r: PriorityRecord):
        virtual = segments[r.index].is_virtual
        vclass = 0 if (r.vertical or not strategy.vertical_priority) else 1
        return (virtual, vclass, -r.support, r.index)

    records.sort(key=key)
    return InsertionPlan([segments[r.index] for r in records], records)


def bounds_for_points(points, padding: float = 0.05) -> Aabb:
    """Inlier box grown by `padding` × extent on each side (per axis)."""
    box = Aabb.from_points(points)
    floor = 1e-3 * max(float(box.extent.max()), 1e-9)
    pad = np.maximum(box.extent, floor) * padding
    if padding == 0.0 and not box.is_solid():
        pad = np.full(3, floor)
    return Aabb(box.min - pad, box.max + pad)


def wall_segments(bounds: Aabb) -> list[PlanarSegment]:
    """The six box walls as virtual primitives, in WALL_NAMES order."""
    return [
        PlanarSegment(plane=w, bounds=bounds, is_virtual=True, label=name)
        for w, name in zip(bounds.walls(), WALL_NAMES)
    ]


def augment_bounds_faces(plan: InsertionPlan, bounds: Aabb) -> InsertionPlan:
    """
    Append the six box walls to a plan as virtual primitives.

    They coincide with the faces of the root cell, so they never split a
    cell; they make the walls available as shell faces wherever an interior
    cell touches the box.
    """
    walls = wall_segments(bounds)
    base = len(plan.segments)
    records = [
        PriorityRecord(base + k, w.plane.verticality, 0, w.plane.verticality > 0.9)
        for k, w in enumerate(walls)
    ]
    return InsertionPlan(plan.segments + walls, plan.records + records)


# === Complex ===

@dataclass
class BspNode:
    id: int
    parent: Optional[int] = None
    plane: Optional[Plane] = None
    # input position of the splitting segment
    segment: Optional[int] = None
    positive: Optional[int] = None
    negative: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.plane is None


@dataclass(frozen=True)
class InsertionEvent:
    segment: int
    tested: int
    splits: int


@dataclass(frozen=True, eq=False)
class AdjacencyRecord:
    """Shared face between cells i < j; `ring` is oriented from i towards j."""

    i: int
    j: int
    ring: np.ndarray
    area: float
    tag: int


@dataclass(eq=False)
class CellComplex:
    """
    Leaf cells of a BSP over `bounds` plus their adjacency graph.

    Leaves are addressed by node id while building; `cells` and
    `adjacency` expose them re-indexed 0..n-1 in ascending node id.
    """

    bounds: Aabb
    mode: PartitionMode = PartitionMode.ADAPTIVE
    segment_padding: float = 0.01
    cell_budget: int = DEFAULT_CELL_BUDGET
    tolerance: Tolerance = field(default=None)  # type: ignore[assignment]
    leaves: dict[int, ConvexCell] = field(default_factory=dict)
    nodes: dict[int, BspNode] = field(default_factory=dict)
    graph: nx.Graph = field(default_factory=nx.Graph)
    log: list[InsertionEvent] = field(default_factory=list)

    def __post_init__(self):
        if self.tolerance is None:
            self.tolerance = Tolerance.for_extent(float(self.bounds.extent.max()))
        if not self.leaves:
            root = ConvexCell.box(self.bounds)
            self.leaves[0] = root
            self.nodes[0] = BspNode(0)
            self.graph.add_node(0)
        self._next_id = max(self.nodes) + 1
        self._index: Optional[dict[int, int]] = None

    # --- read access ---

    @property
    def n_cells(self) -> int:
        return len(self.leaves)

    @property
    def leaf_ids(self) -> list[int]:
        return sorted(self.leaves)

    @property
    def cells(self) -> list[ConvexCell]:
        return [self.leaves[k] for k in self.leaf_ids]

    def index_of(self, leaf_id: int) -> int:
        if self._index is None:
            self._index = {k: i for i, k in enumerate(self.leaf_ids)}
        return self._index[leaf_id]

    @property
    def adjacency(self) -> list[AdjacencyRecord]:
        records = []
        for a, b, data in self.graph.edges(data=True):
            ia, ib = self.index_of(a), self.index_of(b)
            ring = data["ring"] if data["src"] == a else data["ring"][::-1]
            if ia > ib:
                ia, ib, ring = ib, ia, ring[::-1]
            records.append(AdjacencyRecord(ia, ib, np.ascontiguousarray(ring), data["area"], data["tag"]))
        records.sort(key=lambda r: (r.i, r.j))
        return records

    @property
    def boundary_flags(self) -> list[frozenset[int]]:
        return [c.boundary_walls for c in self.cells]

    @property
    def split_count(self) -> int:
        return sum(e.splits for e in self.log)

    def total_volume(self) -> float:
        return float(sum(c.volume for c in self.leaves.values()))

    def tiling_error(self) -> float:
        """Relative difference between summed cell volume and box volume."""
        return abs(self.total_volume() - self.bounds.volume) / self.bounds.volume

    # --- mutation ---

    def _split_leaf(self, leaf: int, plane: Plane, tag: int, seg_index: int) -> bool:
        cell = self.leaves[leaf]
        result = clip_cell(cell, plane, tol=self.tolerance, tag=tag)
        if result.kind is not SplitKind.BOTH:
            return False
        assert result.positive is not None and result.negative is not None
        assert result.shared_face is not None
        p, n = self._next_id, self._next_id + 1
        self._next_id += 2
        node = self.nodes[leaf]
        node.plane, node.segment, node.positive, node.negative = plane, seg_index, p, n
        self.nodes[p] = BspNode(p, parent=leaf)
        self.nodes[n] = BspNode(n, parent=leaf)
        del self.leaves[leaf]
        self.leaves[p] = result.positive
        self.leaves[n] = result.negative

        self.graph.add_node(p)
        self.graph.add_node(n)
        cap = result.shared_face
        # cap is CCW about +normal, i.e. oriented from the negative child into the positive one
        self.graph.add_edge(n, p, ring=cap, src=n, area=polygon_area(cap), tag=tag)
        for k in list(self.graph.neighbors(leaf)):
            data = self.graph.edges[leaf, k]
            ring = data["ring"] if data["src"] == leaf else data["ring"][::-1]
            pos_ring, neg_ring = split_polygon(ring, plane, self.tolerance.plane)
            for child, part in ((p, pos_ring), (n, neg_ring)):
                if len(part) >= 3:
                    area = polygon_area(part)
                    if area > self.tolerance.area:
                        self.graph.add_edge(child, k, ring=part, src=child, area=area, tag=data["tag"])
        self.graph.remove_node(leaf)
        self._index = None
        return True

    def insert(self, segment: PlanarSegment, seg_index: int) -> InsertionEvent:
        """Split the relevant leaves by one segment's plane."""
        tag = wall_tag(WALL_NAMES.index(segment.label)) if segment.is_virtual else seg_index
        plane = segment.plane
        if self.mode is PartitionMode.ADAPTIVE and segment.bounds is not None and not segment.is_virtual:
            box = segment.bounds.padded(0.0, self.segment_padding)
            candidates = [k for k in self.leaf_ids if self.leaves[k].bounds.intersects(box)]
        else:
            candidates = self.leaf_ids
        splits = 0
        for leaf in candidates:
            if self._split_leaf(leaf, plane, tag, seg_index):
                splits += 1
        event = InsertionEvent(seg_index, len(candidates), splits)
        self.log.append(event)
        logger.debug(f"insert segment {seg_index}: tested {len(candidates)}, split {splits}, cells {self.n_cells}")
        if self.n_cells > self.cell_budget:
            raise CellBudgetExceeded(self.cell_budget, self.n_cells, len(self.log))
        return event

    # --- serialization ---

    def to_dict(self) -> dict:
        return {
            "bounds": self.bounds.to_dict(),
            "mode": self.mode.value,
            "cells": [
                {**c.to_dict(), "tags": _halfspace_tags(c, self.tolerance), "walls": sorted(c.boundary_walls)}
                for c in self.cells
            ],
            "adjacency": [
                {"i": r.i, "j": r.j, "area": r.area, "tag": r.tag, "ring": r.ring.tolist()}
                for r in self.adjacency
            ],
            "insertions": [
                {"segment": e.segment, "tested": e.tested, "splits": e.splits} for e in self.log
            ],
        }


def _halfspace_tags(cell: ConvexCell, tol: Tolerance) -> list[int]:
    """Tag of the face each halfspace contributes (0 for redundant halfspaces)."""
    tags = []
    for plane, _ in cell.halfspaces:
        tag = 0
        for f in cell.faces:
            if np.all(np.abs(plane.signed_distance(f.ring)) <= 10 * tol.plane):
                tag = f.tag
                break
        tags.append(tag)
    return tags


def insert_primitive(cx: CellComplex, segment: PlanarSegment, seg_index: int = 0) -> CellComplex:
    """Insert one primitive; cells it does not cross are left unchanged."""
    cx.insert(segment, seg_index)
    return cx


def build_complex(
    segments: Sequence[PlanarSegment],
    bounds: Aabb,
    strategy: Optional[PartitionStrategy] = None,
    inlier_distance: float = 0.005,
    use_bounds_faces: bool = False,
    cell_budget: int = DEFAULT_CELL_BUDGET,
) -> CellComplex:
    """
    Partition `bounds` by the segments' supporting planes.

    Args:
        segments: refined segments; face tags of the result are positions in this list
        bounds: the region to partition (should contain all inliers, padded)
        strategy: adaptive or exhaustive, plus ordering and padding settings
        inlier_distance: RANSAC inlier distance; segment boxes are grown by
            strategy.segment_padding times this
        use_bounds_faces: append the box walls to the plan as virtual primitives
        cell_budget: raise CellBudgetExceeded beyond this many cells

    Returns:
        The finished complex. Cell volumes tile the box.
    """
    strategy = strategy or PartitionStrategy()
    if not bounds.is_solid():
        raise GeometryError("partition bounds must have nonzero extent on every axis")
    t0 = time.perf_counter()
    cx = CellComplex(
        bounds=bounds,
        mode=strategy.mode,
        segment_padding=strategy.segment_padding * inlier_distance,
        cell_budget=cell_budget,
    )
    if segments:
        plan = plan_insertion(segments, strategy)
        if use_bounds_faces:
            plan = augment_bounds_faces(plan, bounds)
        for seg, rec in zip(plan.segments, plan.records):
            cx.insert(seg, rec.index)
    err = cx.tiling_error()
    if err > 1e-7:
        logger.warning(f"cell volumes deviate from the box volume by {err:.3g} (relative)")
    logger.info(
        f"{strategy.mode.value} partition: {len(segments)} primitives -> {cx.n_cells} cells, "
        f"{cx.graph.number_of_edges()} adjacencies ({time.perf_counter() - t0:.2f}s)"
    )
    return cx


def save_complex(cx: CellComplex, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(cx.to_dict()))


def load_complex(path: Union[str, Path]) -> CellComplex:
    """Rebuild a complex from its JSON form (cells from their halfspaces)."""
    doc = json.loads(Path(path).read_text())
    return complex_from_dict(doc)


def complex_from_dict(doc: dict) -> CellComplex:
    bounds = Aabb.from_dict(doc["bounds"])
    tol = Tolerance.for_extent(float(bounds.extent.max()))
    leaves: dict[int, ConvexCell] = {}
    nodes: dict[int, BspNode] = {}
    graph = nx.Graph()
    n_walls = len(WALL_NAMES)
    for i, c in enumerate(doc["cells"]):
        hs = [(Plane.from_dict(h), Side(h["side"])) for h in c["halfspaces"]]
        tags = c.get("tags", list(range(len(hs))))
        # the six leading halfspaces are the box walls; the rest were inserted
        leaves[i] = ConvexCell.from_halfspaces(hs[n_walls:], bounds, tags=tags[n_walls:], tol=tol)
        nodes[i] = BspNode(i)
        graph.add_node(i)
    for r in doc["adjacency"]:
        ring = np.asarray(r["ring"], dtype=np.float64)
        graph.add_edge(r["i"], r["j"], ring=ring, src=r["i"], area=float(r["area"]), tag=int(r["tag"]))
    cx = CellComplex(
        bounds=bounds,
        mode=PartitionMode(doc.get("mode", "adaptive")),
        tolerance=tol,
        leaves=leaves,
        nodes=nodes,
        graph=graph,
        log=[InsertionEvent(**e) for e in doc.get("insertions", [])],
    )
    return cx
