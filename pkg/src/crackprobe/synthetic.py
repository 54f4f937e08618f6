"""Labelled synthetic tactile datasets built from the bundled fixtures.

Crack traces cross a random fixture branch near its midpoint at a jittered
angle. No-crack traces either run over a blank surface (flat or bumpy) or
over a cracked fixture away from any crack. Each sample carries a random
pose; the tactile response is invariant to the rigid pose, so scans are
simulated in the fixture's canonical frame and the pose is recorded only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import fixtures as fxm
from .errors import InvalidInputError
from .skelgraph import point_at_arc, tangent_orientation
from .tactile import SimParams, TactileTrace, perturb, sample_mask, simulate_scan


@dataclass
class Segment:
    start: tuple
    end: tuple
    node_id: int = -1


@dataclass
class Sample:
    trace: TactileTrace
    trace_id: str
    surface_id: str
    pose_deg: float
    texture: str


class SurfaceBank:
    """Physical masks of the fixtures, rendered once."""

    def __init__(self, fixtures=None, scale: float = fxm.PHYSICAL_SCALE):
        self.fixtures = list(fixtures) if fixtures is not None else fxm.bundled_fixtures()
        if not self.fixtures:
            raise InvalidInputError("no crack fixtures available")
        self.scale = scale
        self._masks = {}

    def mask(self, fx: fxm.Fixture):
        if fx.surface_id not in self._masks:
            self._masks[fx.surface_id] = fxm.physical_mask(fx, pose_deg=0.0, scale=self.scale)
        return self._masks[fx.surface_id]

    def blank(self):
        if "_blank" not in self._masks:
            self._masks["_blank"] = fxm.blank_surface(self.scale)
        return self._masks["_blank"]


def _texture_params(base: SimParams, texture: str, rng: np.random.Generator, seed: int) -> SimParams:
    return fxm.surface_params(texture, base, bump_direction=float(rng.uniform(0, math.pi)),
                              seed=seed)


def crack_segment(fx: fxm.Fixture, rng: np.random.Generator, half_stroke: float = 10.0,
                  angle_jitter_deg: float = 20.0, offset_mm: float = 2.0) -> Segment:
    e = fx.edges[int(rng.integers(len(fx.edges)))]
    poly = np.asarray(e["polyline"], float)
    mid, idx = point_at_arc(poly, float(rng.uniform(0.35, 0.65)))
    theta = tangent_orientation(poly, idx)
    normal = theta + math.pi / 2 + math.radians(rng.uniform(-angle_jitter_deg, angle_jitter_deg))
    if rng.random() < 0.5:
        normal += math.pi
    along = np.array([math.cos(theta), math.sin(theta)])
    centre = mid + rng.uniform(-offset_mm, offset_mm) * along
    d = half_stroke * np.array([math.cos(normal), math.sin(normal)])
    return Segment(tuple(centre - d), tuple(centre + d), int(e["id"]))


def free_segment(rng: np.random.Generator, half_stroke: float = 10.0, margin: float = 12.0) -> Segment:
    centre = rng.uniform(margin, fxm.SURFACE_MM - margin, 2)
    a = rng.uniform(0, 2 * math.pi)
    d = half_stroke * np.array([math.cos(a), math.sin(a)])
    return Segment(tuple(centre - d), tuple(centre + d))


def _crosses(mask, seg: Segment, step: float = 0.05) -> bool:
    s, e = np.asarray(seg.start), np.asarray(seg.end)
    n = int(math.ceil(np.hypot(*(e - s)) / step)) + 1
    return bool(sample_mask(mask, np.linspace(s, e, n)).any())


def generate(n_per_class: int = 150, seed: int = 0, params: SimParams | None = None,
             speed: float = 10.0, rate: float = 400.0, half_stroke: float = 10.0,
             bank: SurfaceBank | None = None) -> list[Sample]:
    """Balanced labelled traces, deterministic per seed; crack samples come first."""
    if n_per_class < 1:
        raise InvalidInputError("n_per_class must be >= 1")
    params = params or SimParams()
    bank = bank or SurfaceBank()
    rng = np.random.default_rng(seed)
    textures = list(fxm.NON_CRACK_SURFACES)
    out = []
    for i in range(n_per_class):
        fx = bank.fixtures[i % len(bank.fixtures)]
        mask = bank.mask(fx)
        texture = textures[int(rng.integers(len(textures)))]
        seg = crack_segment(fx, rng, half_stroke)
        p = _texture_params(params, texture, rng, int(rng.integers(2 ** 31)))
        pose = float(rng.uniform(0, 360))
        tr = simulate_scan(mask, seg, speed, rate, p, surface_id=fx.surface_id)
        out.append(Sample(tr, f"crack_{i:04d}", fx.surface_id, pose, texture))
    for i in range(n_per_class):
        texture = textures[int(rng.integers(len(textures)))]
        on_fixture = i % 2 == 1
        if on_fixture:
            fx = bank.fixtures[(i // 2) % len(bank.fixtures)]
            mask, sid = bank.mask(fx), fx.surface_id
            seg = free_segment(rng, half_stroke)
            while _crosses(mask, seg):
                seg = free_segment(rng, half_stroke)
        else:
            mask, sid = bank.blank(), f"blank_{texture}"
            seg = free_segment(rng, half_stroke)
        p = _texture_params(params, texture, rng, int(rng.integers(2 ** 31)))
        pose = float(rng.uniform(0, 360))
        tr = simulate_scan(mask, seg, speed, rate, p, surface_id=sid)
        out.append(Sample(tr, f"no_crack_{i:04d}", sid, pose, texture))
    return out


def painted_traces(n: int = 60, seed: int = 0, params: SimParams | None = None,
                   speed: float = 10.0, rate: float = 400.0, half_stroke: float = 10.0,
                   bank: SurfaceBank | None = None) -> list[Sample]:
    """Marker lines on flat, uncracked surfaces: no void, so the label is no_crack."""
    params = params or SimParams()
    bank = bank or SurfaceBank()
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        seg = free_segment(rng, half_stroke)
        p = replace(params, seed=int(rng.integers(2 ** 31)))
        tr = simulate_scan(bank.blank(), seg, speed, rate, p, surface_id="painted")
        tr = perturb(tr, "painted", seed=int(rng.integers(2 ** 31)), params=params)
        out.append(Sample(tr, f"painted_{i:04d}", "painted", float(rng.uniform(0, 360)), "flat"))
    return out


def featurize_samples(samples, selection="P,D1,D2,D3", **kw):
    from .classifier import Dataset
    from .dsp import featurize
    vecs = [featurize(s.trace, selection, **kw) for s in samples]
    return Dataset.from_vectors(vecs, [s.trace.label for s in samples],
                                [s.trace_id for s in samples])
