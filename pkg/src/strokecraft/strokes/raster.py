"""Soft stroke rasterization.

The cubic is sampled into a polyline, every pixel center gets its distance to
that polyline, and coverage falls off with a sigmoid of (width/2 - distance)
over a softness scale.  Color is composited over the base with the coverage as
alpha.  Everything is vectorized over a batch of strokes because fitting
evaluates many perturbed candidates per step.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..metrics import LUMA_WEIGHTS
from .canvas import Canvas
from .model import BezierStroke

DEFAULT_SAMPLES = 64
DEFAULT_SOFTNESS = 0.8


def _pixel_centers(height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    xs = np.arange(width, dtype=np.float64) + 0.5
    ys = np.arange(height, dtype=np.float64) + 0.5
    return xs, ys


def polyline_points(vectors: np.ndarray, samples: int) -> np.ndarray:
    """Sample the cubics of a (B, 13) batch at ``samples`` parameters, (B, S, 2)."""
    pts = vectors[:, :8].reshape(-1, 4, 2)
    u = np.linspace(0.0, 1.0, samples)[None, :, None]
    v = 1.0 - u
    return (
        v**3 * pts[:, None, 0]
        + 3.0 * v**2 * u * pts[:, None, 1]
        + 3.0 * v * u**2 * pts[:, None, 2]
        + u**3 * pts[:, None, 3]
    )


def distance_field_batch(poly: np.ndarray, height: int, width: int) -> np.ndarray:
    """Min distance from every pixel center to each polyline, (B, H, W).

    Zero-length segments degrade to point distances.
    """
    a = poly[:, :-1]  # (B, S-1, 2)
    seg = poly[:, 1:] - a
    len2 = np.sum(seg * seg, axis=-1)  # (B, S-1)
    xs, ys = _pixel_centers(height, width)
    px = xs[None, None, None, :]  # broadcast over (B, S-1, H, W)
    py = ys[None, None, :, None]
    dx0 = px - a[:, :, 0, None, None]
    dy0 = py - a[:, :, 1, None, None]
    dot = dx0 * seg[:, :, 0, None, None] + dy0 * seg[:, :, 1, None, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(len2[:, :, None, None] > 0.0, dot / len2[:, :, None, None], 0.0)
    t = np.clip(t, 0.0, 1.0)
    cx = dx0 - t * seg[:, :, 0, None, None]
    cy = dy0 - t * seg[:, :, 1, None, None]
    d2 = cx * cx + cy * cy
    return np.sqrt(d2.min(axis=1))


def coverage_batch(
    vectors: np.ndarray,
    height: int,
    width: int,
    samples: int = DEFAULT_SAMPLES,
    softness: float = DEFAULT_SOFTNESS,
) -> np.ndarray:
    """Per-pixel coverage in [0, 1] for a (B, 13) batch of stroke vectors."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[1] != 13:
        raise ConfigError(f"expected (B, 13) stroke vectors, got {vectors.shape}")
    if samples < 2:
        raise ConfigError(f"need at least 2 polyline samples, got {samples}")
    if softness <= 0:
        raise ConfigError(f"softness must be positive, got {softness}")
    poly = polyline_points(vectors, samples)
    dist = distance_field_batch(poly, height, width)
    half_width = vectors[:, 12, None, None] / 2.0
    opacity = np.clip(vectors[:, 11, None, None], 0.0, 1.0)
    z = (half_width - dist) / softness
    return opacity / (1.0 + np.exp(-z))


def stroke_alpha(
    stroke: BezierStroke,
    shape,
    samples: int = DEFAULT_SAMPLES,
    softness: float = DEFAULT_SOFTNESS,
) -> np.ndarray:
    """Coverage map of a single stroke, (H, W)."""
    if np.isscalar(shape):
        shape = (int(shape), int(shape))
    h, w = shape
    return coverage_batch(stroke.vector[None, :], h, w, samples, softness)[0]


def _stroke_channels(stroke: BezierStroke, channels: int) -> np.ndarray:
    rgb = np.clip(stroke.color / 255.0, 0.0, 1.0)
    if channels == 3:
        return rgb
    return np.array([float(rgb @ LUMA_WEIGHTS)])


def compose_over(
    base: Canvas,
    stroke: BezierStroke,
    samples: int = DEFAULT_SAMPLES,
    softness: float = DEFAULT_SOFTNESS,
) -> Canvas:
    """Alpha-composite one stroke over a canvas; returns a new canvas."""
    alpha = stroke_alpha(stroke, (base.height, base.width), samples, softness)
    color = _stroke_channels(stroke, base.channels)
    out = alpha[:, :, None] * color + (1.0 - alpha[:, :, None]) * base.pixels
    return Canvas(out)


def rasterize_stroke(
    stroke: BezierStroke,
    shape,
    samples: int = DEFAULT_SAMPLES,
    softness: float = DEFAULT_SOFTNESS,
    channels: int = 3,
) -> tuple[Canvas, np.ndarray]:
    """Render one stroke over white; returns the canvas and its coverage map."""
    if np.isscalar(shape):
        shape = (int(shape), int(shape))
    base = Canvas.white(shape, channels)
    alpha = stroke_alpha(stroke, shape, samples, softness)
    color = _stroke_channels(stroke, channels)
    pixels = alpha[:, :, None] * color + (1.0 - alpha[:, :, None]) * base.pixels
    return Canvas(pixels), alpha
