"""ROI image to binary crack mask.

The chain is: uniform mean-colour padding, luminance greyscale, 3x3
Gaussian blur, Otsu binarisation plus one dilation, automatic Canny edges
plus one dilation, external contours with small-area outliers dropped,
contour fill, padding crop.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import (
    DegenerateHistogramWarning,
    InvalidInputError,
    NoCrackCandidateWarning,
)

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
SQUARE_3x3 = np.ones((3, 3), dtype=bool)


@dataclass
class BinaryMask:
    """Boolean foreground image with a physical pixel size.

    Pixel ``(row, col)`` is centred on ``(col * scale, row * scale)`` mm.
    """

    pixels: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=bool)
        if self.pixels.ndim != 2:
            raise InvalidInputError("mask must be 2-D")
        if not self.scale > 0:
            raise InvalidInputError("mask scale must be positive")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def count(self) -> int:
        return int(self.pixels.sum())

    def is_empty(self) -> bool:
        return not self.pixels.any()


@dataclass
class ContourSet:
    contours: list[np.ndarray]
    areas: np.ndarray

    def __len__(self):
        return len(self.contours)


@dataclass
class Segmentation:
    """Every intermediate stage of :func:`segment`, padded unless noted."""

    gray: np.ndarray
    binary: BinaryMask
    edges: BinaryMask
    contours: ContourSet
    filled: BinaryMask
    mask: BinaryMask  # padding removed, physical scale attached
    pad: int
    warnings: list[str] = field(default_factory=list)


def load_image(path) -> np.ndarray:
    """Read a PNG/PGM/any Pillow-readable file as an (H, W, 3) uint8 array."""
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot read image {path}: {exc}") from exc


def save_pgm(image, path) -> None:
    """Write a binary P5 PGM; boolean masks become 0/255."""
    arr = image.pixels if isinstance(image, BinaryMask) else np.asarray(image)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    else:
        arr = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(Path(path), format="PPM")


def save_png(image, path) -> None:
    arr = np.asarray(image)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    Image.fromarray(np.clip(arr, 0, 255).astype(np.uint8)).save(Path(path), format="PNG")


def _as_rgb(img) -> np.ndarray:
    arr = np.asarray(img)
    if arr.size == 0:
        raise InvalidInputError("empty image")
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise InvalidInputError(f"expected an RGB image, got shape {arr.shape}")
    if arr.min() < 0 or arr.max() > 255:
        raise InvalidInputError("channel values must lie in [0, 255]")
    return arr


def padding_colour(img) -> np.ndarray:
    """Per-channel mean of all pixels, floored."""
    rgb = _as_rgb(img)
    return np.floor(rgb.reshape(-1, 3).astype(np.float64).mean(axis=0)).astype(np.int64)


def pad_and_gray(img, pad: int = 10, sigma: float = 0.8, blur: bool = True) -> np.ndarray:
    """Pad with the mean colour, convert to luminance and blur with a 3x3 Gaussian.

    Returns a float array of shape (H + 2*pad, W + 2*pad) in [0, 255].
    """
    if pad < 0:
        raise InvalidInputError("pad must be >= 0")
    rgb = _as_rgb(img).astype(np.float64)
    colour = padding_colour(rgb)
    h, w, _ = rgb.shape
    padded = np.empty((h + 2 * pad, w + 2 * pad, 3))
    padded[:] = colour
    padded[pad:pad + h, pad:pad + w] = rgb
    gray = padded @ LUMA_WEIGHTS
    if blur:
        gray = cv2.GaussianBlur(gray, (3, 3), sigmaX=sigma, sigmaY=sigma,
                                borderType=cv2.BORDER_REPLICATE)
    return gray


def otsu_threshold(gray) -> int | None:
    """Threshold t in 0..255 maximising between-class variance of {< t} vs {>= t}.

    Returns None when no threshold separates two classes.
    """
    levels = np.clip(np.rint(np.asarray(gray)), 0, 255).astype(np.int64).ravel()
    hist = np.bincount(levels, minlength=256).astype(np.float64)
    total = hist.sum()
    values = np.arange(256, dtype=np.float64)
    # class 0 holds levels strictly below t
    w0 = np.concatenate([[0.0], np.cumsum(hist)[:-1]])
    s0 = np.concatenate([[0.0], np.cumsum(hist * values)[:-1]])
    w1 = total - w0
    s1 = (hist * values).sum() - s0
    with np.errstate(divide="ignore", invalid="ignore"):
        between = w0 * w1 * (s0 / w0 - s1 / w1) ** 2 / total**2
    between = np.where((w0 > 0) & (w1 > 0), between, 0.0)
    if not between.max() > 0:
        return None
    return int(np.argmax(between))


def dilate(mask: np.ndarray) -> np.ndarray:
    return ndimage.binary_dilation(np.asarray(mask, dtype=bool), structure=SQUARE_3x3)


def binarize(gray, dark_foreground: bool = True) -> BinaryMask:
    """Otsu threshold followed by a single 3x3 dilation."""
    gray = np.asarray(gray, dtype=np.float64)
    if gray.size == 0:
        raise InvalidInputError("empty image")
    t = otsu_threshold(gray)
    if t is None:
        warnings.warn("degenerate-histogram: image has a single intensity",
                      DegenerateHistogramWarning, stacklevel=2)
        return BinaryMask(np.zeros(gray.shape, dtype=bool))
    levels = np.clip(np.rint(gray), 0, 255)
    fg = levels < t if dark_foreground else levels >= t
    return BinaryMask(dilate(fg))


def canny_thresholds(gray, sigma: float = 0.33) -> tuple[float, float]:
    m = float(np.mean(gray))
    return max(0.0, (1.0 - sigma) * m), min(255.0, (1.0 + sigma) * m)


def edge_mask(gray, sigma: float = 0.33) -> BinaryMask:
    """Canny edges with thresholds placed around the mean intensity, dilated once."""
    gray = np.asarray(gray)
    if gray.size == 0:
        raise InvalidInputError("empty image")
    if gray.dtype == bool:
        gray = gray.astype(np.uint8) * 255
    img8 = np.clip(np.rint(gray), 0, 255).astype(np.uint8)
    lo, hi = canny_thresholds(img8, sigma)
    edges = cv2.Canny(img8, lo, hi) > 0
    return BinaryMask(dilate(edges))


def shoelace_area(loop: np.ndarray) -> float:
    x, y = loop[:, 0].astype(np.float64), loop[:, 1].astype(np.float64)
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def find_contours(edges) -> ContourSet:
    """Outer boundary loops (x, y) of each edge component."""
    pixels = edges.pixels if isinstance(edges, BinaryMask) else np.asarray(edges, dtype=bool)
    found, _ = cv2.findContours(pixels.astype(np.uint8), cv2.RETR_EXTERNAL,
                                cv2.CHAIN_APPROX_NONE)
    loops = [c.reshape(-1, 2) for c in found if len(c) >= 3]
    # order by first point so results do not depend on OpenCV's traversal order
    loops.sort(key=lambda c: (int(c[:, 1].min()), int(c[:, 0].min())))
    return ContourSet(loops, np.array([shoelace_area(c) for c in loops]))


def contours_to_mask(edges, cutoff: float = 0.5) -> BinaryMask:
    """Fill every contour whose area is at least ``cutoff`` times the mean area."""
    pixels = edges.pixels if isinstance(edges, BinaryMask) else np.asarray(edges, dtype=bool)
    scale = edges.scale if isinstance(edges, BinaryMask) else 1.0
    cs = find_contours(pixels)
    out = np.zeros(pixels.shape, dtype=np.uint8)
    if len(cs) == 0:
        warnings.warn("no-crack-candidate: no contours found", NoCrackCandidateWarning,
                      stacklevel=2)
        return BinaryMask(out.astype(bool), scale)
    keep = [c for c, a in zip(cs.contours, cs.areas) if a >= cutoff * cs.areas.mean()]
    cv2.drawContours(out, [c.reshape(-1, 1, 2).astype(np.int32) for c in keep], -1, 1,
                     thickness=cv2.FILLED)
    return BinaryMask(out.astype(bool), scale)


def segment(img, pad: int = 10, blur_sigma: float = 0.8, canny_sigma: float = 0.33,
            contour_cutoff: float = 0.5, dark_foreground: bool = True,
            sample_width_mm: float = 125.0, scale: float | None = None) -> Segmentation:
    """Run the full preprocessing chain on an RGB ROI.

    Canny runs on the dilated Otsu mask. The returned ``mask`` has the
    padding cropped and ``scale`` set to ``scale`` or, when omitted, to
    ``sample_width_mm`` divided by the unpadded image width.
    """
    rgb = _as_rgb(img)
    h, w, _ = rgb.shape
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        gray = pad_and_gray(rgb, pad, blur_sigma)
        binary = binarize(gray, dark_foreground)
        edges = edge_mask(binary.pixels, canny_sigma)
        contours = find_contours(edges)
        filled = contours_to_mask(edges, contour_cutoff)
    for wmsg in caught:
        notes.append(str(wmsg.message))
        warnings.warn(wmsg.message, wmsg.category, stacklevel=2)
    mm_per_px = scale if scale is not None else sample_width_mm / w
    cropped = filled.pixels[pad:pad + h, pad:pad + w]
    mask = BinaryMask(cropped, mm_per_px)
    if mask.is_empty() and not any("no-crack-candidate" in n for n in notes):
        notes.append("no-crack-candidate: empty mask after cropping")
    return Segmentation(gray, binary, edges, contours, filled, mask, pad, notes)
