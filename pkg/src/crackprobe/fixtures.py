"""Bundled crack fixtures: nine 125 x 125 mm cracked surfaces plus flat and bumpy
non-crack surfaces, with rendering to camera images and physical masks."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .geometry import GroundTruth, GroundTruthBranch
from .imaging import BinaryMask
from .skelgraph import branch_orientation, point_at_arc, polyline_length
from .tactile import SimParams

SURFACE_MM = 125.0
CAMERA_SCALE = 0.5  # mm per pixel of the camera ROI
PHYSICAL_SCALE = 0.1  # mm per pixel of the simulated surface
CENTRE = (SURFACE_MM / 2, SURFACE_MM / 2)

BACKGROUND_RGB = (200, 197, 192)
CRACK_RGB = (48, 42, 40)


@dataclass
class Fixture:
    surface_id: str
    kind: str
    vertices: list[dict]  # {id, x, y, kind} in mm
    edges: list[dict]  # {id, u, v, polyline (n, 2) mm, width_mm}
    pose_deg: float = 0.0

    def polylines(self, pose_deg: float | None = None) -> list[np.ndarray]:
        pose = self.pose_deg if pose_deg is None else pose_deg
        return [rotate(np.asarray(e["polyline"], float), pose) for e in self.edges]

    def widths(self) -> list[float]:
        return [float(e["width_mm"]) for e in self.edges]

    def ground_truth(self, pose_deg: float | None = None) -> GroundTruth:
        """Branches in the canonical frame; the pose is carried separately."""
        branches = []
        for e in self.edges:
            poly = np.asarray(e["polyline"], float)
            mid, _ = point_at_arc(poly)
            branches.append(GroundTruthBranch(float(e["width_mm"]), polyline_length(poly),
                                              branch_orientation(poly), tuple(map(float, mid))))
        return GroundTruth(branches, self.pose_deg if pose_deg is None else pose_deg, CENTRE)

    def to_dict(self) -> dict:
        """Graph document in camera pixels, the same schema as CrackGraph JSON."""
        s = CAMERA_SCALE
        return {
            "surface_id": self.surface_id, "kind": self.kind, "pose_deg": self.pose_deg,
            "scale_mm_per_px": s,
            "vertices": [{"id": v["id"], "x": v["x"] / s, "y": v["y"] / s, "kind": v["kind"]}
                         for v in self.vertices],
            "edges": [{"id": e["id"], "u": e["u"], "v": e["v"], "width_mm": e["width_mm"],
                       "polyline": [[round(x / s, 6), round(y / s, 6)] for x, y in e["polyline"]]}
                      for e in self.edges],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Fixture":
        s = float(doc["scale_mm_per_px"])
        verts = [{"id": v["id"], "x": v["x"] * s, "y": v["y"] * s, "kind": v["kind"]}
                 for v in doc["vertices"]]
        edges = [{"id": e["id"], "u": e["u"], "v": e["v"], "width_mm": float(e["width_mm"]),
                  "polyline": (np.asarray(e["polyline"], float) * s).tolist()}
                 for e in doc["edges"]]
        return cls(doc["surface_id"], doc.get("kind", ""), verts, edges,
                   float(doc.get("pose_deg", 0.0)))


def rotate(points: np.ndarray, pose_deg: float, centre=CENTRE) -> np.ndarray:
    a = math.radians(pose_deg)
    rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    c = np.asarray(centre)
    return (np.asarray(points, float) - c) @ rot.T + c


def render_mask(polylines, widths, scale: float, size_mm: float = SURFACE_MM) -> BinaryMask:
    """Foreground where the distance to any centreline is at most half its width."""
    n = int(round(size_mm / scale))
    out = np.zeros((n, n), dtype=bool)
    for poly, w in zip(polylines, widths):
        r = w / 2
        for a, b in zip(poly[:-1], poly[1:]):
            lo = np.floor((np.minimum(a, b) - r) / scale).astype(int)
            hi = np.ceil((np.maximum(a, b) + r) / scale).astype(int)
            c0, r0 = max(lo[0], 0), max(lo[1], 0)
            c1, r1 = min(hi[0], n - 1), min(hi[1], n - 1)
            if c1 < c0 or r1 < r0:
                continue
            ys, xs = np.mgrid[r0:r1 + 1, c0:c1 + 1] * scale
            ab = b - a
            denom = float(ab @ ab)
            t = np.clip(((xs - a[0]) * ab[0] + (ys - a[1]) * ab[1]) / denom, 0, 1) if denom else 0.0
            d2 = (xs - a[0] - t * ab[0]) ** 2 + (ys - a[1] - t * ab[1]) ** 2
            out[r0:r1 + 1, c0:c1 + 1] |= d2 <= r * r
    return BinaryMask(out, scale)


def camera_image(fx: Fixture, pose_deg: float | None = None, noise: float = 4.0,
                 seed: int = 0) -> np.ndarray:
    """RGB ROI of the whole surface at CAMERA_SCALE."""
    mask = render_mask(fx.polylines(pose_deg), fx.widths(), CAMERA_SCALE).pixels
    img = np.empty(mask.shape + (3,))
    img[:] = BACKGROUND_RGB
    img[mask] = CRACK_RGB
    if noise:
        img += np.random.default_rng(seed).normal(0, noise, img.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def physical_mask(fx: Fixture, pose_deg: float | None = None,
                  scale: float = PHYSICAL_SCALE) -> BinaryMask:
    return render_mask(fx.polylines(pose_deg), fx.widths(), scale)


def blank_surface(scale: float = PHYSICAL_SCALE) -> BinaryMask:
    n = int(round(SURFACE_MM / scale))
    return BinaryMask(np.zeros((n, n), dtype=bool), scale)


# non-crack surfaces: one flat and three bumpy textures
NON_CRACK_SURFACES = {
    "flat": {},
    "bumpy_1": {"bump_amplitude": 0.04, "bump_wavelength": 4.0},
    "bumpy_2": {"bump_amplitude": 0.06, "bump_wavelength": 7.0},
    "bumpy_3": {"bump_amplitude": 0.05, "bump_wavelength": 11.0},
}


def surface_params(surface_id: str, base: SimParams, **over) -> SimParams:
    from dataclasses import replace
    extra = NON_CRACK_SURFACES.get(surface_id, {})
    return replace(base, **{**extra, **over})


# ---------------------------------------------------------------- definitions

def _line(a, b, step=1.0):
    a, b = np.asarray(a, float), np.asarray(b, float)
    n = max(2, int(math.ceil(np.hypot(*(b - a)) / step)) + 1)
    return np.linspace(a, b, n)


def _wave(x0, x1, y0, amp, periods, step=0.5):
    xs = np.arange(x0, x1 + 1e-9, step)
    ys = y0 + amp * np.sin(2 * math.pi * periods * (xs - x0) / (x1 - x0))
    return np.column_stack([xs, ys])


def _bend(a, b, sag, step=1.0):
    """Quadratic Bezier from a to b bulging ``sag`` mm to the left of a->b."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    d = b - a
    normal = np.array([d[1], -d[0]]) / np.hypot(*d)
    ctrl = (a + b) / 2 + 2 * sag * normal
    n = max(3, int(math.ceil(np.hypot(*d) / step)) + 1)
    t = np.linspace(0, 1, n)[:, None]
    return (1 - t) ** 2 * a + 2 * (1 - t) * t * ctrl + t ** 2 * b


def _tree(junctions, arms, bridges=()):
    """Build vertex/edge lists from junction points, (junction, tip, width[, sag]) arms
    and (junction, junction, width) bridges."""
    vertices = [{"id": i, "x": float(p[0]), "y": float(p[1]), "kind": "junction"}
                for i, p in enumerate(junctions)]
    edges = []
    for ja, jb, w in bridges:
        edges.append({"id": len(edges), "u": ja, "v": jb, "width_mm": w,
                      "polyline": _line(junctions[ja], junctions[jb]).tolist()})
    for arm in arms:
        j, tip, w = arm[:3]
        sag = arm[3] if len(arm) > 3 else 0.0
        vid = len(vertices)
        vertices.append({"id": vid, "x": float(tip[0]), "y": float(tip[1]), "kind": "endpoint"})
        poly = _bend(junctions[j], tip, sag) if sag else _line(junctions[j], tip)
        edges.append({"id": len(edges), "u": j, "v": vid, "width_mm": w, "polyline": poly.tolist()})
    return vertices, edges


def _single(poly, w):
    poly = np.asarray(poly, float)
    vertices = [{"id": 0, "x": float(poly[0, 0]), "y": float(poly[0, 1]), "kind": "endpoint"},
                {"id": 1, "x": float(poly[-1, 0]), "y": float(poly[-1, 1]), "kind": "endpoint"}]
    return vertices, [{"id": 0, "u": 0, "v": 1, "width_mm": w, "polyline": poly.tolist()}]


def build_fixtures() -> list[Fixture]:
    out = []
    out.append(Fixture("simple_1", "simple", *_single(_line((20, 55), (105, 70)), 3.0), 0.0))
    out.append(Fixture("simple_2", "simple", *_single(_wave(12, 113, 62.5, 22, 1.0), 2.0), 30.0))
    out.append(Fixture("simple_3", "simple", *_single(_line((25, 95), (100, 30)), 7.0), 90.0))
    out.append(Fixture("y_1", "y", *_tree([(62, 60)], [(0, (62, 18), 3.0), (0, (25, 95), 2.5),
                                                       (0, (100, 95), 4.0)]), 15.0))
    out.append(Fixture("y_2", "y", *_tree([(70, 62)], [(0, (15, 55), 2.0, 4.0), (0, (100, 25), 3.5),
                                                       (0, (95, 105), 5.0)]), 200.0))
    out.append(Fixture("y_3", "y", *_tree([(55, 65)], [(0, (20, 22), 2.5, -6.0),
                                                       (0, (110, 55), 3.0, 5.0),
                                                       (0, (52, 79), 2.0)]), 120.0))
    out.append(Fixture("complex_1", "complex",
                       *_tree([(45, 62), (82, 62)],
                              [(0, (20, 30), 2.5), (0, (22, 95), 3.0), (1, (105, 30), 2.0),
                               (1, (108, 92), 3.5)], [(0, 1, 4.0)]), 45.0))
    out.append(Fixture("complex_2", "complex",
                       *_tree([(40, 50), (75, 70)],
                              [(0, (12, 40), 2.0), (0, (45, 15), 2.5), (1, (110, 60), 3.0),
                               (1, (70, 108), 1.5)], [(0, 1, 3.0)]), 300.0))
    out.append(Fixture("complex_3", "complex",
                       *_tree([(60, 55), (78, 62)],
                              [(0, (10, 72), 3.0, -8.0), (0, (72, 12), 2.0, -5.0),
                               (1, (112, 76), 2.5, 6.0), (1, (54, 82), 4.0)], [(0, 1, 5.0)]), 75.0))
    return out


def fixture_dir() -> Path:
    return Path(str(resources.files("crackprobe") / "data" / "fixtures"))


def load_fixture(path) -> Fixture:
    try:
        fx = Fixture.from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc.msg})") from None
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise SchemaError(f"{path}: malformed fixture ({type(exc).__name__}: {exc})") from None
    if not fx.edges:
        raise SchemaError(f"{path}: fixture has no edges")
    return fx


def bundled_fixtures() -> list[Fixture]:
    return [load_fixture(p) for p in sorted(fixture_dir().glob("*.json"))]


def bundled(surface_id: str) -> Fixture:
    return load_fixture(fixture_dir() / f"{surface_id}.json")


def write_bundle(dest=None) -> list[Path]:
    """Regenerate fixture JSON and posed camera PNGs."""
    from .imaging import save_png
    dest = Path(dest) if dest else fixture_dir()
    dest.mkdir(parents=True, exist_ok=True)
    written = []
    for fx in build_fixtures():
        p = dest / f"{fx.surface_id}.json"
        p.write_text(json.dumps(fx.to_dict(), indent=1))
        img = dest / f"{fx.surface_id}.png"
        save_png(camera_image(fx), img)
        written += [p, img]
    return written
