"""Trace preprocessing and frequency-domain features.

preprocess: x2 linear oversampling, zero-phase Butterworth low-pass,
first-difference derivative, same low-pass again. Features are peak
statistics of the FFT magnitude and of the concatenated DWT details of
each selected channel's filtered derivative.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from . import wavelets
from .errors import InvalidInputError, InvalidLengthError
from .tactile import CHANNELS, TactileTrace

SOURCES = ("FFT", "DWT")
STATS = ("NPEAKS", "MAXPEAK", "MINPEAK")


@dataclass
class FilteredTrace:
    rate: float
    channels: np.ndarray  # (4, m) filtered derivative
    direction_split: int
    velocity_forward: float
    velocity_backward: float

    def channel(self, name: str) -> np.ndarray:
        return self.channels[CHANNELS.index(name)]


@dataclass
class Spectrum:
    frequencies: np.ndarray
    magnitudes: np.ndarray
    n_fft: int
    padded: bool


@dataclass
class FeatureVector:
    values: np.ndarray
    names: list[str]
    selection: tuple[str, ...]

    @property
    def tag(self) -> str:
        return ",".join(self.selection)


def butter_lowpass(cutoff: float = 30.0, rate: float = 800.0, order: int = 4) -> np.ndarray:
    return signal.butter(order, cutoff, btype="low", fs=rate, output="sos")


def lowpass(x, rate: float, cutoff: float = 30.0, order: int = 4) -> np.ndarray:
    """Forward-backward (zero-phase) Butterworth along the last axis."""
    return signal.sosfiltfilt(butter_lowpass(cutoff, rate, order), x, axis=-1, padtype="even")


def upsample_linear(x: np.ndarray, factor: int = 2) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[-1]
    grid = np.arange((n - 1) * factor + 1) / factor
    return np.vstack([np.interp(grid, np.arange(n), row) for row in x])


def preprocess(trace: TactileTrace, cutoff: float = 30.0, order: int = 4,
               factor: int = 2) -> FilteredTrace:
    if len(trace) < 16:
        raise InvalidLengthError("trace needs at least 16 samples")
    x = trace.channels.astype(np.float64)
    # offsets do not change the derivative; removing them keeps flat channels exactly zero
    x = x - x[:, :1]
    rate = trace.sampling_rate * factor
    up = upsample_linear(x, factor)
    smooth = lowpass(up, rate, cutoff, order)
    deriv = np.diff(smooth, axis=1, prepend=smooth[:, :1]) * rate
    return FilteredTrace(rate, lowpass(deriv, rate, cutoff, order), trace.direction_split * factor,
                         trace.velocity_forward, trace.velocity_backward)


def fft(x, rate: float, pad_pow2: bool = False) -> Spectrum:
    """One-sided DFT magnitudes."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) < 2:
        raise InvalidLengthError("fft needs at least 2 samples")
    n = len(x)
    n_fft = 1 << (n - 1).bit_length() if pad_pow2 else n
    mags = np.abs(np.fft.rfft(x, n_fft))
    return Spectrum(np.fft.rfftfreq(n_fft, 1.0 / rate), mags, n_fft, n_fft != n)


def spectrogram(x, rate: float, window: int = 64, overlap: float = 0.75,
                shape=(150, 150)) -> np.ndarray:
    """Hann STFT magnitude resized to ``shape`` and scaled to [0, 1].

    Row index grows with frequency (row 0 is DC), column index with time.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) < window:
        raise InvalidLengthError(f"signal shorter than one {window}-sample window")
    _, _, mag = signal.spectrogram(x, fs=rate, window="hann", nperseg=window,
                                   noverlap=int(round(window * overlap)), detrend="constant",
                                   mode="magnitude")
    return wavelets.normalize_image(mag, shape)


def peak_features(y, prominence: float = 0.05) -> dict:
    """Count and extreme values of strict local maxima with enough prominence."""
    y = np.asarray(y, dtype=np.float64)
    if len(y) < 3:
        raise InvalidLengthError("peak_features needs at least 3 samples")
    span = y.max() - y.min()
    idx = np.flatnonzero((y[1:-1] > y[:-2]) & (y[1:-1] > y[2:])) + 1
    if idx.size and span > 0:
        prom = signal.peak_prominences(y, idx)[0]
        idx = idx[prom >= prominence * span]
    else:
        idx = idx[:0]
    if idx.size == 0:
        return {"n_peaks": 0, "max_peak": 0.0, "min_peak": 0.0}
    vals = y[idx]
    return {"n_peaks": int(idx.size), "max_peak": float(vals.max()), "min_peak": float(vals.min())}


def parse_selection(selection) -> tuple[str, ...]:
    """'D2,D3,P' or an iterable of channel names -> canonical ordered tuple."""
    if isinstance(selection, str):
        items = [s.strip() for s in selection.replace("+", ",").split(",") if s.strip()]
    else:
        items = [str(s).strip() for s in selection]
    unknown = set(items) - set(CHANNELS)
    if unknown:
        raise InvalidInputError(f"unknown channels {sorted(unknown)}")
    if not items:
        raise InvalidInputError("channel selection is empty")
    return tuple(c for c in CHANNELS if c in items)


def feature_names(selection) -> list[str]:
    sel = parse_selection(selection)
    return [f"{c}_{src}_{stat}" for c in sel for src in SOURCES for stat in STATS]


def channel_features(deriv: np.ndarray, rate: float, dwt_family: str = "db11",
                     dwt_levels: int = 4, prominence: float = 0.05) -> list[float]:
    out = []
    spec = fft(deriv, rate)
    coeffs = wavelets.dwt(deriv, dwt_family, dwt_levels)
    for series in (spec.magnitudes, coeffs.detail_vector()):
        pf = peak_features(series, prominence)
        out += [float(pf["n_peaks"]), pf["max_peak"], pf["min_peak"]]
    return out


def featurize(trace, selection="P,D2,D3", dwt_family: str = "db11", dwt_levels: int = 4,
              prominence: float = 0.05, cutoff: float = 30.0, order: int = 4) -> FeatureVector:
    """Feature vector for a TactileTrace (or an already filtered trace).

    Layout per channel, channels in P, D1, D2, D3 order: FFT block then DWT
    block, each (n_peaks, max_peak, min_peak).
    """
    sel = parse_selection(selection)
    ft = trace if isinstance(trace, FilteredTrace) else preprocess(trace, cutoff, order)
    values = []
    for c in sel:
        values += channel_features(ft.channel(c), ft.rate, dwt_family, dwt_levels, prominence)
    return FeatureVector(np.array(values), feature_names(sel), sel)


def trace_images(trace, channel: str = "P"):
    """(spectrogram, scalogram) 150x150 images of one channel's filtered derivative."""
    ft = trace if isinstance(trace, FilteredTrace) else preprocess(trace)
    x = ft.channel(channel)
    return spectrogram(x, ft.rate), wavelets.scalogram(x, rate=ft.rate)
