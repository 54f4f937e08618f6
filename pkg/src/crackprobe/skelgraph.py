"""Skeletonisation, spur pruning, skeleton-to-graph and the midpoint graph.

Coordinates inside graphs are pixel ``(x, y)`` = ``(col, row)`` with y
pointing down; millimetres are obtained by multiplying with ``scale``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import DegenerateBranchError, InvalidGraphError
from .imaging import BinaryMask

# (drow, dcol) for the 8 neighbours, clockwise from north
_OFFSETS = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]
_RING = np.ones((3, 3), dtype=int)
_RING[1, 1] = 0


def neighbor_count(pixels: np.ndarray) -> np.ndarray:
    px = np.asarray(pixels, dtype=np.uint8)
    return ndimage.convolve(px, _RING, mode="constant", cval=0) * px


def _zhang_suen(px: np.ndarray) -> np.ndarray:
    img = np.pad(np.asarray(px, dtype=bool), 1)
    while True:
        changed = False
        for step in (0, 1):
            p = [np.roll(np.roll(img, -dr, 0), -dc, 1) for dr, dc in _OFFSETS]
            p2, p3, p4, p5, p6, p7, p8, p9 = p
            b = sum(q.astype(np.uint8) for q in p)
            seq = p + [p2]
            a = sum((~seq[i] & seq[i + 1]).astype(np.uint8) for i in range(8))
            cond = img & (b >= 2) & (b <= 6) & (a == 1)
            if step == 0:
                cond &= ~(p2 & p4 & p6) & ~(p4 & p6 & p8)
            else:
                cond &= ~(p2 & p4 & p8) & ~(p2 & p6 & p8)
            if cond.any():
                img = img & ~cond
                changed = True
        if not changed:
            return img[1:-1, 1:-1]


def _connected_ring_table() -> np.ndarray:
    """For each 8-bit neighbourhood, True when >= 2 neighbours form one 8-connected set."""
    table = np.zeros(256, dtype=bool)
    for code in range(256):
        cells = [_OFFSETS[i] for i in range(8) if code >> i & 1]
        if len(cells) < 2:
            continue
        seen = {cells[0]}
        stack = [cells[0]]
        while stack:
            r, c = stack.pop()
            for q in cells:
                if q not in seen and max(abs(q[0] - r), abs(q[1] - c)) == 1:
                    seen.add(q)
                    stack.append(q)
        table[code] = len(seen) == len(cells)
    return table


_REDUNDANT = _connected_ring_table()


def _ring_code(img: np.ndarray, r: int, c: int) -> int:
    code = 0
    for i, (dr, dc) in enumerate(_OFFSETS):
        if img[r + dr, c + dc]:
            code |= 1 << i
    return code


def _remove_redundant(px: np.ndarray) -> np.ndarray:
    """Delete pixels whose neighbours stay 8-connected without them.

    Candidates with the fewest 4-neighbours go first, so bumps and staircase
    corners are shaved before pixels lying on a straight run.
    """
    img = np.pad(np.asarray(px, dtype=bool), 1)
    weights = np.array([[128, 1, 2], [64, 0, 4], [32, 16, 8]])
    cross = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    while True:
        codes = ndimage.correlate(img.astype(np.int64), weights, mode="constant")
        cand = img & _REDUNDANT[codes]
        if not cand.any():
            return img[1:-1, 1:-1]
        four = ndimage.correlate(img.astype(np.int64), cross, mode="constant")
        tier = four[cand].min()
        for r, c in np.argwhere(cand & (four == tier)):
            if _REDUNDANT[_ring_code(img, r, c)]:
                img[r, c] = False


def _canonical_turns(px: np.ndarray) -> int:
    """Quarter turns that bring ``px`` to the first of its four rotations in byte order."""
    keys = []
    for k in range(4):
        r = np.rot90(px, k)
        keys.append((r.shape, np.packbits(r).tobytes(), k))
    return min(keys)[2]


def skeletonize(mask: BinaryMask) -> BinaryMask:
    """One-pixel-wide 8-connected skeleton by Zhang-Suen thinning.

    Zhang-Suen peels the south-east and north-west borders in separate
    sub-iterations, so on its own it is not symmetric under quarter turns.
    Thinning a canonical rotation of the mask and turning the result back
    makes the skeleton of a rotated mask exactly the rotated skeleton.
    """
    if mask.is_empty():
        return BinaryMask(np.zeros_like(mask.pixels), mask.scale)
    px = np.asarray(mask.pixels, dtype=bool)
    k = _canonical_turns(px)
    thin = _remove_redundant(_zhang_suen(np.rot90(px, k)))
    return BinaryMask(np.ascontiguousarray(np.rot90(thin, -k)), mask.scale)


@dataclass
class Vertex:
    id: int
    x: float
    y: float
    kind: str  # "endpoint", "junction" or "loop" (synthetic vertex on a closed ring)
    pixels: list = field(default_factory=list, repr=False)

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass
class Edge:
    id: int
    u: int
    v: int
    polyline: np.ndarray  # (n, 2) pixel (x, y)

    @property
    def arc_length_px(self) -> float:
        return polyline_length(self.polyline)


@dataclass
class CrackGraph:
    vertices: list[Vertex]
    edges: list[Edge]
    scale: float = 1.0

    def degree(self, vid: int) -> int:
        return sum((e.u == vid) + (e.v == vid) for e in self.edges)

    def counts(self) -> dict:
        kinds = [v.kind for v in self.vertices]
        return {"endpoints": kinds.count("endpoint"), "junctions": kinds.count("junction"),
                "edges": len(self.edges)}

    def to_dict(self) -> dict:
        return {
            "vertices": [{"id": v.id, "x": float(v.x), "y": float(v.y), "kind": v.kind}
                         for v in self.vertices],
            "edges": [{"id": e.id, "u": e.u, "v": e.v,
                       "polyline": [[float(x), float(y)] for x, y in e.polyline]}
                      for e in self.edges],
            "scale_mm_per_px": float(self.scale),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CrackGraph":
        try:
            verts = [Vertex(int(v["id"]), float(v["x"]), float(v["y"]), str(v["kind"]))
                     for v in doc["vertices"]]
            edges = [Edge(int(e["id"]), int(e["u"]), int(e["v"]),
                          np.asarray(e["polyline"], dtype=np.float64).reshape(-1, 2))
                     for e in doc["edges"]]
            return cls(verts, edges, float(doc["scale_mm_per_px"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidGraphError(f"malformed graph document: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def polyline_length(points) -> float:
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.hypot(*np.diff(pts, axis=0).T)))


def to_graph(skel: BinaryMask) -> CrackGraph:
    """Trace a skeleton into endpoint/junction vertices and pixel-polyline edges.

    Adjacent junction pixels are merged into one vertex at the cluster
    centroid, which keeps the graph equivariant under quarter turns (any
    single-pixel choice needs a tie-break that depends on scan order). A closed ring without
    endpoints or junctions gets one synthetic ``loop`` vertex.
    """
    px = np.asarray(skel.pixels, dtype=bool)
    h, w = px.shape
    if not px.any():
        return CrackGraph([], [], skel.scale)
    deg = neighbor_count(px)
    owner = -np.ones(px.shape, dtype=np.int64)
    vertices: list[Vertex] = []

    jlab, nj = ndimage.label(px & (deg >= 3), structure=np.ones((3, 3)))
    single = np.argwhere(px & (deg <= 1))
    # vertices ordered by their first pixel in raster order
    seeds = []
    for k in range(1, nj + 1):
        cells = np.argwhere(jlab == k)
        seeds.append((tuple(cells[0]), "junction", cells))
    for r, c in single:
        seeds.append(((r, c), "endpoint", np.array([[r, c]])))
    seeds.sort(key=lambda s: s[0])
    for vid, (_, kind, cells) in enumerate(seeds):
        centre = cells.mean(axis=0)
        vertices.append(Vertex(vid, float(centre[1]), float(centre[0]), kind,
                               [tuple(map(int, p)) for p in cells]))
        owner[cells[:, 0], cells[:, 1]] = vid

    def nbrs(r, c):
        for dr, dc in _OFFSETS:
            rr, cc = r + dr, c + dc
            if 0 <= rr < h and 0 <= cc < w and px[rr, cc]:
                yield rr, cc

    visited = np.zeros(px.shape, dtype=bool)
    direct = set()
    raw_edges = []
    for vert in vertices:
        rep = (vert.y, vert.x)
        for q in vert.pixels:
            for r in nbrs(*q):
                other = owner[r]
                if other == vert.id:
                    continue
                if other >= 0:
                    key = (min(vert.id, other), max(vert.id, other))
                    if key in direct:
                        continue
                    direct.add(key)
                    path = [rep, q, r, (vertices[other].y, vertices[other].x)]
                    raw_edges.append((vert.id, int(other), path))
                    continue
                if visited[r]:
                    continue
                # path pixels have exactly two neighbours, so the walk never branches
                path = [rep, q]
                prev, cur = q, r
                end = None
                while True:
                    visited[cur] = True
                    path.append(cur)
                    nxt = [n for n in nbrs(*cur) if n != prev]
                    if not nxt:
                        break
                    if owner[nxt[0]] >= 0:
                        end = nxt[0]
                        break
                    if visited[nxt[0]]:
                        break
                    prev, cur = cur, nxt[0]
                if end is None:
                    continue
                tgt = int(owner[end])
                if tgt == vert.id and len(path) <= 4:
                    continue  # tiny ring hugging a junction cluster
                path.append(end)
                path.append((vertices[tgt].y, vertices[tgt].x))
                raw_edges.append((vert.id, tgt, path))

    # rings with no vertex at all
    ring_lab, nr = ndimage.label(px & ~visited & (owner < 0), structure=np.ones((3, 3)))
    for k in range(1, nr + 1):
        cells = np.argwhere(ring_lab == k)
        start = tuple(int(v) for v in cells[0])
        vid = len(vertices)
        vertices.append(Vertex(vid, float(start[1]), float(start[0]), "loop", [start]))
        path = [start]
        prev, cur = None, start
        visited[start] = True
        while True:
            nxt = [n for n in nbrs(*cur) if n != prev and ring_lab[n] == k]
            if prev is not None and start in nxt:
                path.append(start)
                break
            fresh = [n for n in nxt if not visited[n]]
            if not fresh:
                path.append(start)
                break
            prev, cur = cur, fresh[0]
            visited[cur] = True
            path.append(cur)
        raw_edges.append((vid, vid, path))

    edges = []
    for eid, (u, v, path) in enumerate(raw_edges):
        dedup = [path[0]]
        for p in path[1:]:
            if p != dedup[-1]:
                dedup.append(p)
        poly = np.array([[c, r] for r, c in dedup], dtype=np.float64)
        edges.append(Edge(eid, u, v, poly))
    return CrackGraph(vertices, edges, skel.scale)


def prune(skel: BinaryMask, min_branch_px: float = 10) -> BinaryMask:
    """Iteratively delete endpoint-to-junction branches shorter than ``min_branch_px``.

    Junction-to-junction branches and isolated lines are never removed. When
    every branch at a junction is short, the longest one is kept. Like the
    thinning, pruning runs on the canonical rotation so that length ties
    resolve the same way for every quarter turn of the input.
    """
    if min_branch_px < 0:
        raise ValueError("min_branch_px must be >= 0")
    px = np.asarray(skel.pixels, dtype=bool).copy()
    if min_branch_px == 0 or not px.any():
        return BinaryMask(px, skel.scale)
    k = _canonical_turns(px)
    out = _prune_canonical(np.ascontiguousarray(np.rot90(px, k)), min_branch_px)
    return BinaryMask(np.ascontiguousarray(np.rot90(out, -k)), skel.scale)


def _prune_canonical(px: np.ndarray, min_branch_px: float) -> np.ndarray:
    while True:
        g = to_graph(BinaryMask(px))
        deg = {v.id: g.degree(v.id) for v in g.vertices}
        kind = {v.id: v.kind for v in g.vertices}
        spurs = {}
        for e in g.edges:
            if e.u == e.v:
                continue
            ends = sorted((e.u, e.v), key=lambda i: kind[i] != "endpoint")
            tip, base = ends
            if kind[tip] == "endpoint" and kind[base] == "junction" and deg[base] >= 3 \
                    and e.arc_length_px < min_branch_px:
                spurs.setdefault(base, []).append(e)
        if not spurs:
            return px
        for base, short in spurs.items():
            if len(short) >= deg[base]:
                short = sorted(short, key=lambda e: (-e.arc_length_px, e.id))[1:]
            keep = set(g.vertices[base].pixels)
            for e in short:
                for x, y in e.polyline:
                    if x != int(x) or y != int(y):
                        continue  # a junction centroid, not a pixel
                    rc = (int(y), int(x))
                    if rc not in keep:
                        px[rc] = False
        px = _remove_redundant(px)


@dataclass
class MidpointNode:
    id: int
    midpoint: np.ndarray
    left_point: np.ndarray
    right_point: np.ndarray
    branch_orientation: float
    source_edge_id: int


@dataclass
class MidpointGraph:
    nodes: list[MidpointNode]
    weights: np.ndarray  # mm
    scale: float

    def __len__(self):
        return len(self.nodes)

    def to_dict(self) -> dict:
        return {
            "nodes": [{"id": n.id, "x": float(n.midpoint[0]), "y": float(n.midpoint[1]),
                       "left": [float(v) for v in n.left_point],
                       "right": [float(v) for v in n.right_point],
                       "orientation": float(n.branch_orientation),
                       "source_edge_id": n.source_edge_id} for n in self.nodes],
            "weights": [[float(v) for v in row] for row in self.weights],
            "scale_mm_per_px": float(self.scale),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MidpointGraph":
        try:
            nodes = [MidpointNode(int(n["id"]), np.array([n["x"], n["y"]], dtype=float),
                                  np.asarray(n["left"], dtype=float),
                                  np.asarray(n["right"], dtype=float),
                                  float(n["orientation"]), int(n["source_edge_id"]))
                     for n in doc["nodes"]]
            return cls(nodes, np.asarray(doc["weights"], dtype=float).reshape(len(nodes), len(nodes)),
                       float(doc["scale_mm_per_px"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidGraphError(f"malformed midpoint graph: {exc}") from exc


def point_at_arc(polyline, fraction: float = 0.5) -> tuple[np.ndarray, int]:
    """Point at ``fraction`` of the arc length and the index of the nearest polyline vertex."""
    pts = np.asarray(polyline, dtype=np.float64)
    seg = np.hypot(*np.diff(pts, axis=0).T)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    target = fraction * cum[-1]
    i = int(np.clip(np.searchsorted(cum, target, side="right") - 1, 0, len(seg) - 1))
    t = 0.0 if seg[i] == 0 else (target - cum[i]) / seg[i]
    point = pts[i] + t * (pts[i + 1] - pts[i])
    nearest = int(np.argmin(np.abs(cum - target)))
    return point, nearest


def tangent_orientation(polyline, index: int, reach: int = 2) -> float:
    pts = np.asarray(polyline, dtype=np.float64)
    a = pts[max(index - reach, 0)]
    b = pts[min(index + reach, len(pts) - 1)]
    return float(math.atan2(b[1] - a[1], b[0] - a[0]))


def midpoints(g: CrackGraph, shift_mm: float = 10.0) -> MidpointGraph:
    """Complete graph over branch midpoints with perpendicular scan end points."""
    if not g.edges:
        raise InvalidGraphError("graph has no edges")
    if not shift_mm > 0:
        raise ValueError("shift_mm must be positive")
    shift_px = shift_mm / g.scale
    nodes = []
    for e in g.edges:
        if len(e.polyline) < 2:
            raise InvalidGraphError(f"edge {e.id} has fewer than 2 polyline points")
        mid, k = point_at_arc(e.polyline)
        theta = tangent_orientation(e.polyline, k)
        normal = np.array([math.sin(theta), -math.cos(theta)])
        nodes.append(MidpointNode(len(nodes), mid, mid + shift_px * normal,
                                  mid - shift_px * normal, theta, e.id))
    pos = np.array([n.midpoint for n in nodes])
    diff = pos[:, None, :] - pos[None, :, :]
    weights = np.sqrt((diff ** 2).sum(axis=2)) * g.scale
    return MidpointGraph(nodes, weights, g.scale)


def branch_length(polyline, scale: float = 1.0) -> float:
    """Sum of consecutive Euclidean steps, in mm."""
    pts = np.asarray(polyline, dtype=np.float64)
    if len(pts) < 2:
        raise InvalidGraphError("branch needs at least 2 points")
    return scale * polyline_length(pts)


def branch_orientation(polyline) -> float:
    """atan2 of the end-minus-start chord, in (-pi, pi].

    A closed polyline uses the chord from its start to the point at half its arc length.
    """
    pts = np.asarray(polyline, dtype=np.float64)
    if len(pts) < 2:
        raise DegenerateBranchError("branch needs at least 2 points")
    start, end = pts[0], pts[-1]
    if np.allclose(start, end):
        if len(pts) > 2 and polyline_length(pts) > 0:
            end, _ = point_at_arc(pts, 0.5)
        else:
            raise DegenerateBranchError("branch start equals end")
    theta = math.atan2(end[1] - start[1], end[0] - start[0])
    return math.pi if theta == -math.pi else theta


def extract(mask: BinaryMask, prune_px: float = 10, shift_mm: float = 10.0):
    """mask -> (skeleton, pruned skeleton, CrackGraph, MidpointGraph or None)."""
    skel = skeletonize(mask)
    pruned = prune(skel, prune_px)
    graph = to_graph(pruned)
    mids = midpoints(graph, shift_mm) if graph.edges else None
    return skel, pruned, graph, mids
