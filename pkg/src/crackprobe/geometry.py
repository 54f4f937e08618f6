"""Crack width from the proximity trace, branch length and orientation from the
graph, branch counting, and Mean Relative Error scoring against ground truth."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import dsp
from .errors import InvalidInputError, WidthUndefinedError
from .skelgraph import CrackGraph, MidpointNode, branch_length, branch_orientation
from .tactile import TactileTrace

FLAT_SLOPE = 1e-9


def pass_widths(trace, cutoff: float = 30.0, order: int = 4) -> tuple[float, float]:
    """Per-pass width v * N / f_s from the steepest fall and rise of filtered dP/dt."""
    ft = trace if isinstance(trace, dsp.FilteredTrace) else dsp.preprocess(trace, cutoff, order)
    d = ft.channel("P")
    if np.max(np.abs(d)) <= FLAT_SLOPE:
        raise WidthUndefinedError("proximity channel is flat; no crack edges found")
    k = ft.direction_split
    widths = []
    for seg, v in ((d[:k], ft.velocity_forward), (d[k:], ft.velocity_backward)):
        fall, rise = edge_pair(seg)
        widths.append(v * (rise - fall) / ft.rate)
    return widths[0], widths[1]


def edge_pair(d: np.ndarray) -> tuple[int, int]:
    """Indices i <= j maximising d[j] - d[i]: steepest fall, then the steepest rise after it.

    Each pass enters the void before leaving it, so the rise is searched
    only after the fall. Ties keep the earliest indices.
    """
    d = np.asarray(d, dtype=np.float64)
    prefix_min = np.minimum.accumulate(d)
    gain = d - prefix_min
    j = int(np.argmax(gain))
    i = int(np.argmin(d[:j + 1]))
    return i, j


def width_from_trace(trace, cutoff: float = 30.0, order: int = 4) -> float:
    """Mean of the forward and backward width estimates, in mm."""
    ws, we = pass_widths(trace, cutoff, order)
    return 0.5 * (ws + we)


@dataclass
class BranchMeasurement:
    node_id: int
    is_crack: bool
    width: float
    length: float
    orientation: float
    midpoint_mm: tuple = (0.0, 0.0)
    crack_probability: float | None = None
    note: str = ""

    def to_dict(self) -> dict:
        d = {"node_id": int(self.node_id), "is_crack": bool(self.is_crack),
             "width_mm": round(float(self.width), 9), "length_mm": round(float(self.length), 9),
             "orientation_rad": round(float(self.orientation), 9),
             "midpoint_mm": [round(float(v), 9) for v in self.midpoint_mm]}
        if self.crack_probability is not None:
            d["crack_probability"] = round(float(self.crack_probability), 9)
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class CrackReport:
    branches: list[BranchMeasurement]

    @property
    def n_branches(self) -> int:
        return sum(b.is_crack for b in self.branches)

    def to_dict(self) -> dict:
        return {"branches": [b.to_dict() for b in self.branches], "n_branches": self.n_branches}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def measure_branch(node: MidpointNode, trace: TactileTrace | None, graph: CrackGraph,
                   is_crack: bool, crack_probability: float | None = None,
                   cutoff: float = 30.0, order: int = 4) -> BranchMeasurement:
    """Width from the trace when ``is_crack`` (0 otherwise); length and orientation
    from the node's source edge. WidthUndefinedError propagates."""
    edge = next(e for e in graph.edges if e.id == node.source_edge_id)
    width = width_from_trace(trace, cutoff, order) if is_crack else 0.0
    return BranchMeasurement(node.id, bool(is_crack), width,
                             branch_length(edge.polyline, graph.scale),
                             branch_orientation(edge.polyline),
                             tuple(float(v) for v in node.midpoint * graph.scale),
                             crack_probability)


@dataclass
class GroundTruthBranch:
    width: float
    length: float
    orientation: float
    midpoint_mm: tuple


@dataclass
class GroundTruth:
    branches: list[GroundTruthBranch]
    pose_deg: float = 0.0
    centre_mm: tuple = (62.5, 62.5)

    @property
    def count(self) -> int:
        return len(self.branches)

    def posed(self) -> list[GroundTruthBranch]:
        """Branches with midpoints and orientations rotated by the surface pose."""
        a = math.radians(self.pose_deg)
        c, s = math.cos(a), math.sin(a)
        cx, cy = self.centre_mm
        out = []
        for b in self.branches:
            x, y = b.midpoint_mm[0] - cx, b.midpoint_mm[1] - cy
            out.append(GroundTruthBranch(b.width, b.length, wrap_angle(b.orientation + a),
                                         (cx + c * x - s * y, cy + s * x + c * y)))
        return out


@dataclass
class MreReport:
    mre_length: float
    mre_width: float
    mre_orientation: float
    mre_branches: float
    matches: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {k: (round(v, 9) if isinstance(v, float) else v) for k, v in asdict(self).items()}


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(theta, 2 * math.pi)
    return math.pi if w == -math.pi else w


def line_angle_error(a: float, b: float) -> float:
    """Distance between two undirected line orientations, in [0, pi/2]."""
    d = abs(math.remainder(a - b, math.pi))
    return d


def relative_errors(est: BranchMeasurement, true: GroundTruthBranch) -> dict:
    return {
        "length": abs(est.length - true.length) / abs(true.length),
        "width": abs(est.width - true.width) / abs(true.width),
        # normalised by the largest possible line-orientation error
        "orientation": line_angle_error(est.orientation, true.orientation) / (math.pi / 2),
    }


def score(report: CrackReport, gt: GroundTruth) -> MreReport:
    """Mean relative errors (percent) after matching branches by nearest midpoint."""
    if gt.count == 0:
        raise InvalidInputError("ground truth has no branches")
    truth = gt.posed()
    est = report.branches
    sums = {"length": 0.0, "width": 0.0, "orientation": 0.0}
    matches = []
    if est:
        cost = np.array([[math.dist(t.midpoint_mm, e.midpoint_mm) for e in est] for t in truth])
        rows, cols = linear_sum_assignment(cost)
        pairs = dict(zip(rows.tolist(), cols.tolist()))
    else:
        pairs = {}
    for i, t in enumerate(truth):
        if i in pairs:
            e = est[pairs[i]]
            rel = relative_errors(e, t)
            matches.append({"truth": i, "node_id": int(e.node_id),
                            **{k: round(v, 9) for k, v in rel.items()}})
        else:
            rel = {k: 1.0 for k in sums}
            matches.append({"truth": i, "node_id": None})
        for k in sums:
            sums[k] += rel[k]
    n = len(truth)
    return MreReport(100 * sums["length"] / n, 100 * sums["width"] / n,
                     100 * sums["orientation"] / n,
                     100 * abs(report.n_branches - gt.count) / gt.count, matches)
