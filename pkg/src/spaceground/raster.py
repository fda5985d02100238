"""Deterministic pixel-level geometry.

Raster conventions used throughout the package:

* images are ``uint8`` arrays of shape (H, W, 3), row-major RGB;
* grayscale / probability maps are ``float64`` arrays of shape (H, W) in [0, 1];
* masks are ``bool`` arrays of shape (H, W);
* pixel (x, y) is sampled at the integer coordinate (x, y), with no
  half-pixel offset; x grows rightward, y grows downward;
* ellipse angles are degrees, counterclockwise in image axes (y down).

Everything here is pure: inputs are never mutated and repeated calls are
bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import cos, radians, sin

import numpy as np

from . import font
from .errors import DegenerateHistogramError, DimensionMismatchError, GeometryError

BLACK = (0, 0, 0)
RED = (255, 0, 0)

GRAYSCALE_WEIGHTS = (0.299, 0.587, 0.114)

# Otsu operates on 256 uniform levels over [0, 1].
OTSU_LEVELS = 256


@dataclass(frozen=True)
class Ellipse:
    """Canonical elliptical region: center, semi-axes (a >= b > 0), angle.

    ``theta`` is the rotation of the semi-major axis in degrees,
    counterclockwise in image axes. The center may lie outside the image;
    rasterization clips.
    """

    cx: float
    cy: float
    a: float
    b: float
    theta: float = 0.0

    def __post_init__(self):
        if not (self.a >= self.b > 0):
            raise GeometryError(f"semi-axes must satisfy a >= b > 0, got a={self.a}, b={self.b}")
        if not (np.isfinite(self.cx) and np.isfinite(self.cy) and np.isfinite(self.theta)):
            raise GeometryError("ellipse parameters must be finite")


@dataclass(frozen=True)
class OverlayLayer:
    """Sparse opaque overlay: pixel positions plus a single RGB color."""

    xs: np.ndarray
    ys: np.ndarray
    color: tuple[int, int, int]


def validate_image(img: np.ndarray) -> np.ndarray:
    """Check image conventions (uint8, HxWx3, nonempty) and return the array."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.dtype != np.uint8:
        raise DimensionMismatchError(f"expected uint8 (H, W, 3) image, got {img.dtype} {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise DimensionMismatchError("image must be at least 1x1")
    return img


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Luminance map in [0, 1]: 0.299 R + 0.587 G + 0.114 B, scaled by 1/255."""
    img = validate_image(img)
    r, g, b = GRAYSCALE_WEIGHTS
    lum = r * img[:, :, 0] + g * img[:, :, 1] + b * img[:, :, 2]
    return lum / 255.0


def _normalized_radius(e: Ellipse, w: int, h: int) -> np.ndarray:
    """Per-pixel elliptical radius r (0 at center, 1 on the boundary)."""
    ys, xs = np.mgrid[0:h, 0:w]
    dx = xs - e.cx
    dy = ys - e.cy
    # Rotate the offset by -theta about the center to bring the ellipse
    # axis-aligned; y grows downward so this matches the CCW convention.
    c, s = cos(radians(e.theta)), sin(radians(e.theta))
    du = dx * c + dy * s
    dv = -dx * s + dy * c
    return np.sqrt((du / e.a) ** 2 + (dv / e.b) ** 2)


def rasterize_ellipse(e: Ellipse, w: int, h: int) -> np.ndarray:
    """Binary mask of the ellipse interior; boundary pixels are included.

    Pixel (x, y) is set iff its center, rotated by -theta about (cx, cy),
    satisfies (dx/a)^2 + (dy/b)^2 <= 1. Pixels outside [0, w) x [0, h) are
    clipped implicitly.
    """
    if w < 1 or h < 1:
        raise GeometryError(f"target raster must be at least 1x1, got {w}x{h}")
    return _normalized_radius(e, w, h) <= 1.0


def union_masks(masks: list[np.ndarray], shape: tuple[int, int] | None = None) -> np.ndarray:
    """Per-pixel OR of ``masks``; an empty list needs ``shape`` = (h, w)."""
    if not masks:
        if shape is None:
            raise DimensionMismatchError("empty mask list requires an explicit shape")
        return np.zeros(shape, dtype=bool)
    out = np.zeros_like(np.asarray(masks[0], dtype=bool))
    for m in masks:
        m = np.asarray(m, dtype=bool)
        if m.shape != out.shape:
            raise DimensionMismatchError(f"mask shape {m.shape} != {out.shape}")
        out |= m
    if shape is not None and out.shape != tuple(shape):
        raise DimensionMismatchError(f"masks have shape {out.shape}, requested {tuple(shape)}")
    return out


def grid_line_positions(size: int, interval: int) -> list[int]:
    """Multiples of ``interval`` inside [0, size), including 0."""
    return list(range(0, size, interval))


def render_grid(w: int, h: int, interval: int = 100) -> OverlayLayer:
    """Black coordinate grid with tick values and "x axis" / "y axis" labels.

    One-pixel-wide lines at every multiple of ``interval`` (including the 0
    borders). Tick values sit just inside the image next to their line; the
    axis name labels sit near the ends of the two border lines. All label
    glyphs come from the embedded 5x7 font and are clipped to the image.
    """
    if interval < 2:
        raise GeometryError(f"grid interval must be >= 2, got {interval}")
    xs_parts: list[np.ndarray] = []
    ys_parts: list[np.ndarray] = []

    col_positions = grid_line_positions(w, interval)
    row_positions = grid_line_positions(h, interval)
    rows = np.arange(h, dtype=np.int64)
    cols = np.arange(w, dtype=np.int64)
    for x in col_positions:
        xs_parts.append(np.full(h, x, dtype=np.int64))
        ys_parts.append(rows)
    for y in row_positions:
        xs_parts.append(cols)
        ys_parts.append(np.full(w, y, dtype=np.int64))

    # Tick values: x ticks along the top edge, y ticks along the left edge.
    for x in col_positions:
        gx, gy = font.text_pixels(str(x), x + 2, 2)
        xs_parts.append(gx)
        ys_parts.append(gy)
    for y in row_positions:
        gx, gy = font.text_pixels(str(y), 2, y + 2)
        xs_parts.append(gx)
        ys_parts.append(gy)

    # Axis name labels: "x axis" at the right end of the top border,
    # "y axis" below the last y tick on the left border.
    gx, gy = font.text_pixels("x axis", max(2, w - font.text_width("x axis") - 2), 12)
    xs_parts.append(gx)
    ys_parts.append(gy)
    gx, gy = font.text_pixels("y axis", 2, min(max(2, h - font.GLYPH_HEIGHT - 2), row_positions[-1] + 12))
    xs_parts.append(gx)
    ys_parts.append(gy)

    xs = np.concatenate(xs_parts)
    ys = np.concatenate(ys_parts)
    keep = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    return OverlayLayer(xs=xs[keep], ys=ys[keep], color=BLACK)


def mask_layer(mask: np.ndarray, color: tuple[int, int, int] = RED) -> OverlayLayer:
    """Opaque overlay covering the set pixels of ``mask``."""
    ys, xs = np.nonzero(np.asarray(mask, dtype=bool))
    return OverlayLayer(xs=xs.astype(np.int64), ys=ys.astype(np.int64), color=color)


def overlay(base: np.ndarray, layers: list[OverlayLayer]) -> np.ndarray:
    """Composite opaque layers over a copy of ``base``, in order.

    Later layers replace earlier content; callers that want the grid on top
    must pass it last.
    """
    base = validate_image(base)
    h, w = base.shape[:2]
    out = base.copy()
    for layer in layers:
        if layer.xs.size == 0:
            continue
        if layer.xs.min() < 0 or layer.xs.max() >= w or layer.ys.min() < 0 or layer.ys.max() >= h:
            raise DimensionMismatchError("overlay layer exceeds base image bounds")
        out[layer.ys, layer.xs] = layer.color
    return out


def center_distance_weight(ellipses: list[Ellipse], w: int, h: int) -> np.ndarray:
    """Per-pixel max over ellipses of max(0, 1 - r); 0 outside every ellipse.

    r is the normalized elliptical radius, so the weight is 1 at each center
    and falls linearly in r to 0 on the boundary.
    """
    out = np.zeros((h, w), dtype=np.float64)
    for e in ellipses:
        weight = np.maximum(0.0, 1.0 - _normalized_radius(e, w, h))
        np.maximum(out, weight, out=out)
    return out


def quantize_levels(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] values to the 256 uniform Otsu levels."""
    v = np.asarray(values, dtype=np.float64)
    return np.clip(np.round(v * (OTSU_LEVELS - 1)), 0, OTSU_LEVELS - 1).astype(np.int64)


def otsu_threshold(prob: np.ndarray) -> tuple[float, np.ndarray]:
    """Otsu's threshold over 256 uniform bins plus the strict-greater mask.

    The candidate threshold t splits levels into {<= t} and {> t}; the chosen
    t maximizes the between-class variance. A flat maximum is resolved to the
    rounded mean of all maximizing levels. The returned real threshold is
    (t + 0.5) / 255 and the mask keeps values strictly greater than it.

    Raises DegenerateHistogramError when every value falls into one bin
    (callers fall back to a fixed 0.5 threshold).
    """
    prob = np.asarray(prob, dtype=np.float64)
    if prob.size == 0:
        raise DegenerateHistogramError("empty probability map")
    levels = quantize_levels(prob)
    hist = np.bincount(levels.ravel(), minlength=OTSU_LEVELS).astype(np.float64)
    if np.count_nonzero(hist) < 2:
        raise DegenerateHistogramError("all values fall into a single bin")

    total = hist.sum()
    level_values = np.arange(OTSU_LEVELS, dtype=np.float64)
    weighted = hist * level_values
    cum_weight = np.cumsum(hist)
    cum_mean = np.cumsum(weighted)
    grand_mean = cum_mean[-1]

    w0 = cum_weight[:-1]
    w1 = total - w0
    mean0 = np.divide(cum_mean[:-1], w0, out=np.zeros(OTSU_LEVELS - 1), where=w0 > 0)
    mean1 = np.divide(grand_mean - cum_mean[:-1], w1, out=np.zeros(OTSU_LEVELS - 1), where=w1 > 0)
    variance = np.where((w0 > 0) & (w1 > 0), w0 * w1 * (mean0 - mean1) ** 2, -np.inf)

    best = np.flatnonzero(variance == variance.max())
    t = int(round(best.mean()))
    threshold = (t + 0.5) / (OTSU_LEVELS - 1)
    return threshold, prob > threshold
