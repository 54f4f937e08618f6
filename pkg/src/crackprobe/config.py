"""Run configuration: INI-style file with sections, every key also a command-line flag.

Keys are unique across sections, so ``--speed-mm-s`` maps to ``speed_mm_s``
wherever it lives. Values are range-checked at parse time and unknown
sections or keys are rejected.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .tactile import SimParams


def _opt(section, default, lo=None, hi=None, choices=None, help=""):
    return field(default=default, metadata={"section": section, "lo": lo, "hi": hi,
                                            "choices": choices, "help": help})


@dataclass
class Config:
    # imaging
    pad_px: int = _opt("imaging", 10, 0, 500, help="mean-colour border added before filtering")
    blur_sigma: float = _opt("imaging", 0.8, 0.0, 10.0, help="Gaussian blur sigma in pixels (0 disables)")
    canny_sigma: float = _opt("imaging", 0.33, 0.0, 1.0, help="Canny thresholds at (1 -/+ sigma) * mean")
    contour_cutoff: float = _opt("imaging", 0.5, 0.0, 10.0, help="drop contours below this fraction of the mean area")
    sample_width_mm: float = _opt("imaging", 125.0, 1e-3, 1e5, help="physical width of the camera ROI")
    dark_foreground: bool = _opt("imaging", True, help="cracks are darker than the surface")
    # graph
    prune_px: int = _opt("graph", 10, 0, 10000, help="spurs shorter than this are pruned")
    shift_mm: float = _opt("graph", 10.0, 1e-3, 1000.0, help="half length of each perpendicular scan")
    # planner
    exact_max_nodes: int = _opt("planner", 10, 1, 11, help="largest graph solved exhaustively")
    rows: int = _opt("planner", 10, 1, 10000, help="rows of the boustrophedon full scan")
    # scan
    speed_mm_s: float = _opt("scan", 10.0, 1e-3, 1000.0, help="forward scan speed")
    speed_back_mm_s: float = _opt("scan", 0.0, 0.0, 1000.0, help="return speed (0: same as forward)")
    sampling_rate_hz: float = _opt("scan", 400.0, 1.0, 1e6, help="tactile sampling rate")
    physical_scale_mm: float = _opt("scan", 0.1, 1e-3, 10.0, help="resolution of the rendered physical surface")
    # sim
    noise_sigma: float = _opt("sim", SimParams.noise_sigma, 0.0, 10.0)
    p_baseline: float = _opt("sim", SimParams.p_baseline, -1e6, 1e6)
    p_dip_gain: float = _opt("sim", SimParams.p_dip_gain, 0.0, 1e6)
    d_baseline: float = _opt("sim", SimParams.d_baseline, -1e6, 1e6)
    d_edge_gain: float = _opt("sim", SimParams.d_edge_gain, 0.0, 1e6)
    bump_amplitude: float = _opt("sim", SimParams.bump_amplitude, 0.0, 1e6)
    bump_wavelength: float = _opt("sim", SimParams.bump_wavelength, 1e-6, 1e6)
    ramp_mm: float = _opt("sim", SimParams.ramp_mm, 1e-3, 100.0)
    # dsp
    cutoff_hz: float = _opt("dsp", 30.0, 1e-3, 1e6, help="low-pass cutoff")
    filter_order: int = _opt("dsp", 4, 1, 12)
    dwt_family: str = _opt("dsp", "db11", choices=tuple(["haar"] + [f"db{i}" for i in range(1, 12)]))
    dwt_levels: int = _opt("dsp", 4, 1, 20)
    peak_prominence: float = _opt("dsp", 0.05, 0.0, 1.0, help="fraction of the series range")
    # forest
    n_trees: int = _opt("forest", 100, 1, 10000)
    runs: int = _opt("forest", 10, 1, 1000, help="re-split/retrain repetitions")
    channels: str = _opt("forest", "P,D2,D3", help="feature channel selection")
    n_per_class: int = _opt("forest", 150, 5, 100000, help="synthetic traces per class")
    # run
    seed: int = _opt("run", 0, 0, 2 ** 32 - 1)

    def __post_init__(self):
        for f in fields(self):
            setattr(self, f.name, _coerce(f, getattr(self, f.name)))

    def sim_params(self, **over) -> SimParams:
        kw = {k: getattr(self, k) for k in ("noise_sigma", "p_baseline", "p_dip_gain", "d_baseline",
                                             "d_edge_gain", "bump_amplitude", "bump_wavelength",
                                             "ramp_mm")}
        kw["seed"] = self.seed
        kw.update(over)
        return SimParams(**kw)

    @property
    def speed_back(self) -> float:
        return self.speed_back_mm_s or self.speed_mm_s

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def to_ini(self) -> str:
        sections: dict = {}
        for f in fields(self):
            sections.setdefault(f.metadata["section"], []).append(f)
        out = []
        for sec, fs in sections.items():
            out.append(f"[{sec}]")
            for f in fs:
                v = getattr(self, f.name)
                out.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
            out.append("")
        return "\n".join(out)


def _coerce(f, value):
    kind = type(f.default)
    name = f.name
    try:
        if kind is bool:
            if isinstance(value, str):
                low = value.strip().lower()
                if low not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                    raise ValueError(value)
                value = low in ("true", "yes", "1", "on")
            else:
                value = bool(value)
        elif kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            value = int(value)
        elif kind is float:
            value = float(value)
        else:
            value = str(value).strip()
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot read {value!r} as {kind.__name__}") from None
    md = f.metadata
    if md.get("lo") is not None and not md["lo"] <= value <= md["hi"]:
        raise ConfigError(f"{name}={value} outside [{md['lo']}, {md['hi']}]")
    if md.get("choices") and value not in md["choices"]:
        raise ConfigError(f"{name}={value!r} not one of {', '.join(md['choices'])}")
    if name == "channels":
        from .dsp import parse_selection
        try:
            parse_selection(value)
        except ValueError as exc:
            raise ConfigError(f"channels: {exc}") from None
    return value


def field_map() -> dict:
    return {f.name: f for f in fields(Config)}


def load_config(path=None, overrides: dict | None = None) -> Config:
    """Defaults, then the file (if any), then ``overrides`` (flags win)."""
    values = {}
    fmap = field_map()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if parser.defaults():
            raise ConfigError(f"{path}: keys outside a section: {sorted(parser.defaults())}")
        sections = {f.metadata["section"] for f in fmap.values()}
        for sec in parser.sections():
            if sec not in sections:
                raise ConfigError(f"{path}: unknown section [{sec}]")
            for key, raw in parser.items(sec):
                if key not in fmap:
                    raise ConfigError(f"{path}: unknown key {key!r} in [{sec}]")
                if fmap[key].metadata["section"] != sec:
                    raise ConfigError(f"{path}: key {key!r} belongs in "
                                      f"[{fmap[key].metadata['section']}], not [{sec}]")
                values[key] = raw
    for key, v in (overrides or {}).items():
        if key not in fmap:
            raise ConfigError(f"unknown option {key!r}")
        if v is not None:
            values[key] = v
    return Config(**values)


def add_flags(parser) -> None:
    """Mirror every config key as ``--key-name`` (default None so unset flags do not override)."""
    group = parser.add_argument_group("configuration overrides")
    for f in fields(Config):
        flag = "--" + f.name.replace("_", "-")
        help_ = f"{f.metadata.get('help') or f.name} [{f.metadata['section']}] (default {f.default})"
        group.add_argument(flag, dest=f.name, default=None, metavar=type(f.default).__name__.upper(),
                           help=help_)
