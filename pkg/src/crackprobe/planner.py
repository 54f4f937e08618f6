"""Exploration planning over the midpoint graph.

The visit order is a minimum-cost open Hamiltonian path: every node is
tried as the start and every ordering is enumerated (exact up to
``exact_max_nodes``), otherwise nearest-neighbour construction from each
start plus 2-opt. Only inter-midpoint travel is optimised; scan strokes are
added when reporting totals.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyPlanError
from .skelgraph import MidpointGraph

EXACT_MAX_NODES = 10


@dataclass
class ScanSegment:
    node_id: int
    approach: np.ndarray
    start: np.ndarray
    end: np.ndarray
    includes_reverse: bool = True

    @property
    def stroke_mm(self) -> float:
        return float(np.hypot(*(self.end - self.start)))


@dataclass
class ExplorationPlan:
    segments: list[ScanSegment]
    visit_order: list[int]
    travel_cost_mm: float
    start_node: int | None
    heuristic: bool = False
    kind: str = "planner"  # "planner" or "full_scan"
    meta: dict = field(default_factory=dict)

    def total_length_mm(self) -> float:
        """Travel plus strokes; a stroke with a reverse pass counts twice.

        Full-scan plans already carry their sweeps inside ``travel_cost_mm``.
        """
        if self.kind == "full_scan":
            return float(self.travel_cost_mm)
        strokes = sum(s.stroke_mm * (2 if s.includes_reverse else 1) for s in self.segments)
        return float(self.travel_cost_mm + strokes)

    def to_dict(self) -> dict:
        return {
            "start_node": self.start_node,
            "visit_order": [int(i) for i in self.visit_order],
            "travel_cost_mm": float(self.travel_cost_mm),
            "heuristic": self.heuristic,
            "kind": self.kind,
            "segments": [{"node_id": int(s.node_id),
                          "approach": [float(v) for v in s.approach],
                          "start": [float(v) for v in s.start],
                          "end": [float(v) for v in s.end],
                          "includes_reverse": s.includes_reverse} for s in self.segments],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExplorationPlan":
        segs = [ScanSegment(int(s["node_id"]), np.asarray(s["approach"], float),
                            np.asarray(s["start"], float), np.asarray(s["end"], float),
                            bool(s.get("includes_reverse", True))) for s in doc["segments"]]
        return cls(segs, [int(i) for i in doc["visit_order"]], float(doc["travel_cost_mm"]),
                   doc.get("start_node"), bool(doc.get("heuristic", False)),
                   doc.get("kind", "planner"))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def path_cost(order, weights) -> float:
    """Left-to-right sum of consecutive weights along ``order``."""
    cost = 0.0
    for a, b in zip(order[:-1], order[1:]):
        cost += weights[a][b]
    return cost


def _exact(w: list[list[float]], bound: bool) -> tuple[list[int], float]:
    n = len(w)
    best_order: list[int] | None = None
    best = math.inf
    order = [0] * n
    used = [False] * n

    # orderings are visited lexicographically and only a strictly cheaper one
    # replaces the incumbent, which gives the lowest-start-then-lexicographic tie-break
    def extend(depth: int, cost: float):
        nonlocal best, best_order
        if depth == n:
            if cost < best:
                best = cost
                best_order = order.copy()
            return
        last = order[depth - 1]
        row = w[last]
        for j in range(n):
            if not used[j]:
                c = cost + row[j]
                if bound and c >= best:
                    continue
                used[j] = True
                order[depth] = j
                extend(depth + 1, c)
                used[j] = False

    for s in range(n):
        used[s] = True
        order[0] = s
        extend(1, 0.0)
        used[s] = False
    return best_order, best


def _two_opt(order: list[int], w: np.ndarray) -> list[int]:
    """Segment reversals on an open path until no exchange improves it."""
    order = list(order)
    n = len(order)
    improved = True
    while improved:
        improved = False
        for i in range(0, n - 1):
            for k in range(i + 1, n):
                a = order[i - 1] if i > 0 else None
                b, c = order[i], order[k]
                d = order[k + 1] if k + 1 < n else None
                before = (w[a, b] if a is not None else 0.0) + (w[c, d] if d is not None else 0.0)
                after = (w[a, c] if a is not None else 0.0) + (w[b, d] if d is not None else 0.0)
                if after < before - 1e-12:
                    order[i:k + 1] = order[i:k + 1][::-1]
                    improved = True
    return order


def has_improving_two_opt(order, weights) -> bool:
    w = np.asarray(weights)
    return _two_opt(order, w) != list(order)


def _heuristic(w: np.ndarray) -> tuple[list[int], float]:
    n = len(w)
    best_order, best = None, math.inf
    for s in range(n):
        order = [s]
        left = set(range(n)) - {s}
        while left:
            last = order[-1]
            nxt = min(left, key=lambda j: (w[last, j], j))
            order.append(nxt)
            left.remove(nxt)
        order = _two_opt(order, w)
        cost = path_cost(order, w)
        if cost < best or (cost == best and order < best_order):
            best, best_order = cost, order
    return best_order, best


def optimal_order(weights, exact_max_nodes: int = EXACT_MAX_NODES,
                  branch_and_bound: bool = False) -> tuple[list[int], float, bool]:
    """Return (visit order, travel cost, heuristic flag) for a symmetric weight matrix."""
    w = np.asarray(weights, dtype=np.float64)
    n = len(w)
    if n == 0:
        raise EmptyPlanError("cannot plan over an empty graph")
    if n == 1:
        return [0], 0.0, False
    if n <= exact_max_nodes:
        order, cost = _exact(w.tolist(), branch_and_bound)
        return order, path_cost(order, w.tolist()), False
    order, cost = _heuristic(w)
    return order, cost, True


def optimal_path(g: MidpointGraph, exact_max_nodes: int = EXACT_MAX_NODES,
                 branch_and_bound: bool = False) -> ExplorationPlan:
    if len(g) == 0:
        raise EmptyPlanError("cannot plan over an empty graph")
    order, cost, heuristic = optimal_order(g.weights, exact_max_nodes, branch_and_bound)
    ids = [g.nodes[i].id for i in order]
    plan = to_segments(ids, g)
    plan.travel_cost_mm = cost
    plan.heuristic = heuristic
    return plan


def to_segments(order, g: MidpointGraph) -> ExplorationPlan:
    """One left-to-right perpendicular stroke per node, in visit order, in mm."""
    by_id = {n.id: n for n in g.nodes}
    segs = []
    for nid in order:
        node = by_id[nid]
        start = node.left_point * g.scale
        end = node.right_point * g.scale
        segs.append(ScanSegment(nid, start.copy(), start, end, True))
    index = {n.id: i for i, n in enumerate(g.nodes)}
    cost = path_cost([index[i] for i in order], g.weights.tolist()) if order else 0.0
    return ExplorationPlan(segs, list(order), cost, order[0] if order else None)


def full_scan_plan(width_mm: float, height_mm: float, rows: int = 10) -> ExplorationPlan:
    """Boustrophedon coverage: ``rows`` horizontal sweeps, alternating direction."""
    if rows < 1:
        raise ValueError("rows must be >= 1")
    ys = np.linspace(0.0, height_mm, rows) if rows > 1 else np.array([height_mm / 2])
    segs = []
    for i, y in enumerate(ys):
        xs = (0.0, width_mm) if i % 2 == 0 else (width_mm, 0.0)
        start, end = np.array([xs[0], y]), np.array([xs[1], y])
        segs.append(ScanSegment(i, start.copy(), start, end, False))
    travel = rows * width_mm + (height_mm if rows > 1 else 0.0)
    return ExplorationPlan(segs, list(range(rows)), float(travel), 0, False, "full_scan")


def full_scan_for_mask(mask, rows: int = 10) -> ExplorationPlan:
    return full_scan_plan(mask.width * mask.scale, mask.height * mask.scale, rows)


def compare(plan_a: ExplorationPlan, plan_b: ExplorationPlan,
            speed_mm_s: float | None = None) -> dict:
    """Path lengths of two plans and the ratio a/b; durations when a speed is given."""
    if not plan_a.segments or not plan_b.segments:
        raise EmptyPlanError("both plans must be non-empty")
    la, lb = plan_a.total_length_mm(), plan_b.total_length_mm()
    report = {"length_a_mm": la, "length_b_mm": lb, "ratio": la / lb}
    if speed_mm_s:
        report.update(speed_mm_s=speed_mm_s, time_a_s=la / speed_mm_s, time_b_s=lb / speed_mm_s)
    return report
