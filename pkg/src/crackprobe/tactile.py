"""Four-channel tactile traces: scan simulation, CSV ingestion, perturbations.

The simulated finger has one proximity channel P that drops over a crack
void and three deformation channels D1-D3 that pulse when the tip enters
and leaves the void. Units are arbitrary sensor units.
"""
from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InvalidSegmentError, SchemaError
from .imaging import BinaryMask

CHANNELS = ("P", "D1", "D2", "D3")
D_GAINS = (1.0, 0.8, 0.6)
LABELS = ("no_crack", "crack")


@dataclass
class SimParams:
    noise_sigma: float = 0.01
    p_baseline: float = 1.0
    p_dip_gain: float = 0.12
    d_baseline: float = 0.5
    d_edge_gain: float = 0.03
    bump_amplitude: float = 0.0
    bump_wavelength: float = 6.0  # mm
    bump_direction: float = 0.0  # rad, direction of the bump ridges' normal
    ramp_mm: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not self.bump_wavelength > 0:
            raise ValueError("bump_wavelength must be > 0")


@dataclass
class TactileTrace:
    sampling_rate: float
    velocity_forward: float
    velocity_backward: float
    channels: np.ndarray  # (4, n) float32, rows P, D1, D2, D3
    direction_split: int
    label: str | None = None
    surface_id: str = ""
    node_id: int = -1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float32)
        if self.channels.ndim != 2 or self.channels.shape[0] != 4:
            raise SchemaError("trace needs exactly four channels")
        n = self.channels.shape[1]
        if n < 2:
            raise SchemaError("trace needs at least 2 samples")
        if not self.sampling_rate > 0:
            raise SchemaError("sampling_rate must be positive")
        if not 0 < self.direction_split < n:
            raise SchemaError("direction_split must lie strictly inside the trace")
        if self.label is not None and self.label not in LABELS:
            raise SchemaError(f"unknown label {self.label!r}")

    def __len__(self):
        return self.channels.shape[1]

    def channel(self, name: str) -> np.ndarray:
        return self.channels[CHANNELS.index(name)]

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self)) / self.sampling_rate

    def sidecar(self) -> dict:
        return {"sampling_rate": self.sampling_rate, "velocity_forward": self.velocity_forward,
                "velocity_backward": self.velocity_backward,
                "direction_split": self.direction_split, "label": self.label,
                "surface_id": self.surface_id, "node_id": self.node_id}


def _hann(n: int) -> np.ndarray:
    # odd length keeps the kernel centred on a sample
    n = max(1, int(n) | 1)
    return np.hanning(n + 2)[1:-1]


def _smooth(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    half = len(kernel) // 2
    padded = np.pad(x, half, mode="edge")
    return np.convolve(padded, kernel, mode="valid")


def sample_mask(mask: BinaryMask, points_mm: np.ndarray) -> np.ndarray:
    """Mask foreground at (x, y) mm positions; pixel c covers [c - 0.5, c + 0.5) * scale."""
    # the small bias settles samples that land on a pixel boundary up to rounding noise
    cols = np.clip(np.floor(points_mm[:, 0] / mask.scale + 0.5 + 1e-7).astype(int), 0, mask.width - 1)
    rows = np.clip(np.floor(points_mm[:, 1] / mask.scale + 0.5 + 1e-7).astype(int), 0, mask.height - 1)
    return mask.pixels[rows, cols]


def _pass_signals(void: np.ndarray, step_mm: float, params: SimParams):
    n_ramp = max(1, round(params.ramp_mm / step_mm))
    ramp = _hann(n_ramp)
    occupancy = _smooth(void.astype(np.float64), ramp / ramp.sum())
    p = params.p_baseline - params.p_dip_gain * occupancy
    crossings = np.diff(void.astype(np.float64), prepend=float(void[0]))
    pulse = _smooth(crossings, ramp / ramp.max())
    d = [params.d_baseline + g * params.d_edge_gain * pulse for g in D_GAINS]
    return np.vstack([p] + d)


def simulate_scan(mask: BinaryMask, seg, speed: float, rate: float = 400.0,
                  params: SimParams | None = None, speed_back: float | None = None,
                  surface_id: str = "", node_id: int | None = None) -> TactileTrace:
    """Scan start -> end -> start over ``mask`` and synthesise the four channels.

    ``seg`` needs ``start`` and ``end`` in mm (a ScanSegment works). The
    reverse pass begins at the turnaround sample with no dwell.
    """
    params = params or SimParams()
    speed_back = speed if speed_back is None else speed_back
    if not (speed > 0 and speed_back > 0 and rate > 0):
        raise ValueError("speed and rate must be positive")
    start = np.asarray(seg.start, dtype=np.float64)
    end = np.asarray(seg.end, dtype=np.float64)
    length = float(np.hypot(*(end - start)))
    if length == 0:
        raise InvalidSegmentError("zero-length scan segment")
    lo = -0.5 * mask.scale
    hi_x, hi_y = (mask.width - 0.5) * mask.scale, (mask.height - 0.5) * mask.scale
    for x, y in (start, end):
        if not (lo <= x <= hi_x and lo <= y <= hi_y):
            raise InvalidSegmentError(f"segment end point ({x:.3f}, {y:.3f}) mm outside the surface")
    direction = (end - start) / length
    step_f, step_b = speed / rate, speed_back / rate
    s_f = np.arange(int(math.ceil(length / step_f))) * step_f
    s_b = length - np.arange(int(math.floor(length / step_b)) + 1) * step_b
    passes = []
    positions = []
    for s, step in ((s_f, step_f), (s_b, step_b)):
        pts = start + s[:, None] * direction
        void = sample_mask(mask, pts)
        passes.append(_pass_signals(void, step, params))
        positions.append(pts)
    channels = np.hstack(passes)
    pts = np.vstack(positions)
    if params.bump_amplitude:
        u = np.array([math.cos(params.bump_direction), math.sin(params.bump_direction)])
        channels = channels + params.bump_amplitude * np.sin(2 * math.pi * (pts @ u) / params.bump_wavelength)
    rng = np.random.default_rng(params.seed)
    if params.noise_sigma:
        channels = channels + rng.normal(0.0, params.noise_sigma, channels.shape)
    crossed = bool(sample_mask(mask, pts).any())
    return TactileTrace(rate, speed, speed_back, channels, len(s_f),
                        "crack" if crossed else "no_crack", surface_id,
                        getattr(seg, "node_id", -1) if node_id is None else node_id)


def dip_sample_counts(trace: TactileTrace, params: SimParams | None = None) -> tuple[int, int]:
    """Samples per pass whose P lies below half the dip depth."""
    params = params or SimParams()
    p = trace.channel("P").astype(np.float64)
    below = p < params.p_baseline - params.p_dip_gain / 2
    k = trace.direction_split
    return int(below[:k].sum()), int(below[k:].sum())


def _sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def save_trace(trace: TactileTrace, path) -> None:
    """CSV ``t,P,D1,D2,D3`` plus a JSON sidecar with the metadata."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write("t,P,D1,D2,D3\n")
        t = trace.t
        for i in range(len(trace)):
            vals = [t[i]] + [float(v) for v in trace.channels[:, i]]
            fh.write(",".join(f"{v:.9g}" for v in vals) + "\n")
    _sidecar_path(path).write_text(json.dumps(trace.sidecar(), indent=1, sort_keys=True))


def load_trace(path) -> TactileTrace:
    path = Path(path)
    side = _sidecar_path(path)
    if not side.exists():
        raise SchemaError(f"missing metadata sidecar {side.name}")
    meta = json.loads(side.read_text())
    for key in ("sampling_rate", "velocity_forward", "velocity_backward", "direction_split"):
        if key not in meta:
            raise SchemaError(f"sidecar missing key {key}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError("empty trace file") from None
        for col in ("t",) + CHANNELS:
            if col not in header:
                raise SchemaError(f"missing column {col}")
        idx = [header.index(c) for c in ("t",) + CHANNELS]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise SchemaError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(row[i]) for i in idx])
            except ValueError:
                raise SchemaError(f"row {lineno}: non-numeric value") from None
    data = np.array(rows, dtype=np.float64).reshape(-1, 5)
    t = data[:, 0]
    dt = np.diff(t)
    bad = np.flatnonzero(dt <= 0)
    if bad.size:
        raise SchemaError(f"row {bad[0] + 3}: timestamps not strictly increasing (column t)")
    rate = float(meta["sampling_rate"])
    off = np.flatnonzero(np.abs(dt - 1.0 / rate) > 1e-6)
    if off.size:
        raise SchemaError(f"row {off[0] + 3}: timestamp spacing differs from 1/sampling_rate (column t)")
    return TactileTrace(rate, float(meta["velocity_forward"]), float(meta["velocity_backward"]),
                        data[:, 1:].T.astype(np.float32), int(meta["direction_split"]),
                        meta.get("label"), meta.get("surface_id", ""), int(meta.get("node_id", -1)))


class Perturbation(str, enum.Enum):
    OCCLUSION = "occlusion"
    PAINTED = "painted"


def _pass_centres(trace: TactileTrace) -> list[tuple[int, int, float]]:
    k, n = trace.direction_split, len(trace)
    return [(k // 2, k, trace.velocity_forward),
            (k + (n - k) // 2, n - k, trace.velocity_backward)]


def perturb(trace: TactileTrace, mode, seed: int = 0,
            params: SimParams | None = None) -> TactileTrace:
    """Synthetic analogue of occluded or marker-painted cracks.

    occlusion: irregular bumps on D1-D3 only, P untouched.
    painted: reflectance drop with texture on P around each pass centre,
    D1-D3 untouched.
    """
    mode = Perturbation(mode)
    params = params or SimParams()
    rng = np.random.default_rng(seed)
    ch = trace.channels.astype(np.float64).copy()
    n = len(trace)
    idx = np.arange(n)
    rate = trace.sampling_rate
    if mode is Perturbation.OCCLUSION:
        for c in range(1, 4):
            for _ in range(int(rng.integers(3, 7))):
                centre = rng.uniform(0, n)
                width = rng.uniform(0.5, 2.0) / trace.velocity_forward * rate
                amp = rng.uniform(1.0, 3.0) * params.d_edge_gain * rng.choice([-1.0, 1.0])
                ch[c] += amp * np.exp(-0.5 * ((idx - centre) / width) ** 2)
    else:
        band_mm = rng.uniform(1.5, 7.0)
        depth = params.p_dip_gain * rng.uniform(0.5, 1.0)
        for centre, span, v in _pass_centres(trace):
            half = 0.5 * band_mm / v * rate
            ramp = max(1.0, params.ramp_mm / v * rate / 2)
            inside = 1.0 / (1.0 + np.exp(-(half - np.abs(idx - centre)) / (ramp / 4)))
            texture = 0.15 * depth * rng.standard_normal(n)
            ch[0] -= inside * (depth + texture)
    return replace(trace, channels=ch.astype(np.float32), meta=dict(trace.meta, perturbation=mode.value))
