"""Daubechies discrete wavelets (db1..db11) and the first-order complex Gaussian CWT."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import mpmath
import numpy as np
from scipy import ndimage, signal

from .errors import InvalidLevelsError

MAX_DB_ORDER = 11


@lru_cache(maxsize=None)
def daubechies(order: int) -> np.ndarray:
    """Minimum-phase Daubechies reconstruction low-pass filter with ``2*order`` taps.

    Built by spectral factorisation of the Daubechies half-band polynomial in
    50-digit arithmetic, so the taps are orthonormal to double precision.
    """
    if not 1 <= order <= MAX_DB_ORDER:
        raise ValueError(f"Daubechies order must be in 1..{MAX_DB_ORDER}")
    with mpmath.workdps(50):
        n = order
        coeffs = [mpmath.binomial(n - 1 + k, k) for k in range(n)]
        roots_y = mpmath.polyroots(coeffs[::-1], maxsteps=200, extraprec=200) if n > 1 else []
        poly = [mpmath.mpf(1)]
        for y in roots_y:
            b = 2 - 4 * y
            disc = mpmath.sqrt(b * b - 4)
            z1, z2 = (b + disc) / 2, (b - disc) / 2
            z = z1 if abs(z1) < 1 else z2
            poly = _poly_mul(poly, [mpmath.mpf(1), -z])
        for _ in range(n):
            poly = _poly_mul(poly, [mpmath.mpf(1), mpmath.mpf(1)])
        total = sum(poly)
        taps = [mpmath.re(c / total * mpmath.sqrt(2)) for c in poly]
        return np.array([float(c) for c in taps])


def _poly_mul(a, b):
    out = [mpmath.mpc(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _family_order(family: str) -> int:
    f = family.lower().replace("-", "")
    if f == "haar":
        return 1
    if not f.startswith("db"):
        raise ValueError(f"unsupported discrete wavelet family {family!r}")
    return int(f[2:])


def analysis_filters(family: str = "db11") -> tuple[np.ndarray, np.ndarray]:
    """(low-pass, high-pass) decomposition filters."""
    rec = daubechies(_family_order(family))
    dec_lo = rec[::-1].copy()
    k = np.arange(len(dec_lo))
    dec_hi = (-1.0) ** (k + 1) * dec_lo[::-1]
    return dec_lo, dec_hi


@dataclass
class DwtCoeffs:
    details: list[np.ndarray]  # finest level first
    approximation: np.ndarray
    family: str
    levels: int
    lengths: list[int]  # input length at each level, finest first

    def detail_vector(self) -> np.ndarray:
        return np.concatenate(self.details) if self.details else np.zeros(0)


def max_levels(length: int, family: str = "db11") -> int:
    flen = 2 * _family_order(family)
    if length < flen:
        return 0
    return int(math.floor(math.log2(length / flen)))


def dwt_step(x: np.ndarray, dec_lo: np.ndarray, dec_hi: np.ndarray):
    """One Mallat level with half-sample symmetric extension.

    ``c[o] = sum_j f[j] * x_ext[2*o + 1 - j]`` for ``o < (N + F - 1) // 2``.
    """
    x = np.asarray(x, dtype=np.float64)
    n, f = len(x), len(dec_lo)
    m = (n + f - 1) // 2
    ext = np.pad(x, f - 1, mode="symmetric")
    lo = np.convolve(ext, dec_lo)[f:f + 2 * m:2]
    hi = np.convolve(ext, dec_hi)[f:f + 2 * m:2]
    return lo, hi


def idwt_step(lo: np.ndarray, hi: np.ndarray, dec_lo: np.ndarray, dec_hi: np.ndarray,
              length: int) -> np.ndarray:
    """Transpose of :func:`dwt_step`, exact inverse on the first ``length`` samples."""
    f = len(dec_lo)
    m = len(lo)
    size = max(2 * m + 1, length + f - 1)
    up_lo = np.zeros(size)
    up_hi = np.zeros(size)
    up_lo[1:2 * m:2] = lo
    up_hi[1:2 * m:2] = hi
    out = signal.correlate(up_lo, dec_lo, mode="valid") + signal.correlate(up_hi, dec_hi, mode="valid")
    return out[:length]


def dwt(x, family: str = "db11", levels: int = 4) -> DwtCoeffs:
    x = np.asarray(x, dtype=np.float64)
    if levels < 1 or levels > max_levels(len(x), family):
        raise InvalidLevelsError(
            f"levels={levels} outside 1..{max_levels(len(x), family)} for length {len(x)}")
    dec_lo, dec_hi = analysis_filters(family)
    details, lengths = [], []
    approx = x
    for _ in range(levels):
        lengths.append(len(approx))
        approx, d = dwt_step(approx, dec_lo, dec_hi)
        details.append(d)
    return DwtCoeffs(details, approx, family, levels, lengths)


def idwt(coeffs: DwtCoeffs) -> np.ndarray:
    dec_lo, dec_hi = analysis_filters(coeffs.family)
    approx = coeffs.approximation
    for d, n in zip(reversed(coeffs.details), reversed(coeffs.lengths)):
        approx = idwt_step(approx, d, dec_lo, dec_hi, n)
    return approx


# first-order complex Gaussian: d/dt [exp(-i t) exp(-t^2)], unit L2 norm
_CGAU1_NORM = (2.0 * math.sqrt(math.pi / 2.0)) ** -0.5
# peak of sqrt(a)*|Psi(a*w)| over a, with |Psi(w)| ~ |w| exp(-(|w|-1)^2/4)
CGAU1_PEAK_OMEGA = (1.0 + math.sqrt(13.0)) / 2.0
_SUPPORT = 5.0


def cgau1(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    return _CGAU1_NORM * (-2.0 * t - 1j) * np.exp(-1j * t) * np.exp(-t * t)


def scale_to_frequency(scale, rate: float) -> np.ndarray:
    """Tone frequency (Hz) that maximises the response at ``scale`` (in samples)."""
    return CGAU1_PEAK_OMEGA * rate / (2.0 * math.pi * np.asarray(scale, dtype=np.float64))


def frequency_to_scale(freq, rate: float) -> np.ndarray:
    return CGAU1_PEAK_OMEGA * rate / (2.0 * math.pi * np.asarray(freq, dtype=np.float64))


def default_scales(rate: float, n: int = 64, fmin: float = 1.0, fmax: float = 60.0) -> np.ndarray:
    return frequency_to_scale(np.geomspace(fmax, fmin, n), rate)


def cwt(x, scales) -> np.ndarray:
    """Complex coefficients T[a, b] = a**-0.5 * sum_t x[t] conj(psi((t - b) / a)).

    Scales and translations are in samples; rows follow ``scales``.
    """
    x = np.asarray(x, dtype=np.float64)
    scales = np.asarray(scales, dtype=np.float64)
    if scales.size == 0 or np.any(scales <= 0):
        raise ValueError("scales must be non-empty and positive")
    out = np.empty((len(scales), len(x)), dtype=np.complex128)
    for i, a in enumerate(scales):
        half = int(math.ceil(_SUPPORT * a))
        k = np.arange(-half, half + 1)
        kern = np.conj(cgau1(k / a)) / math.sqrt(a)
        # correlation of x with kern, centred on b
        out[i] = signal.fftconvolve(x, kern[::-1], mode="full")[half:half + len(x)]
    return out


def normalize_image(img: np.ndarray, shape=(150, 150)) -> np.ndarray:
    """Bilinear resize to ``shape`` then min-max scale to [0, 1]; constant input gives zeros."""
    img = np.asarray(img, dtype=np.float64)
    zoom = (shape[0] / img.shape[0], shape[1] / img.shape[1])
    out = ndimage.zoom(img, zoom, order=1, mode="nearest", grid_mode=False)[:shape[0], :shape[1]]
    lo, hi = out.min(), out.max()
    if hi - lo <= 1e-12 * max(1.0, abs(hi)):
        return np.zeros(shape)
    return (out - lo) / (hi - lo)


def scalogram(x, scales=None, rate: float = 800.0, shape=(150, 150)) -> np.ndarray:
    if scales is None:
        scales = default_scales(rate)
    return normalize_image(np.abs(cwt(x, scales)), shape)
