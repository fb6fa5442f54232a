"""Fit a single brushstroke to a target canvas by pixel-loss descent."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..metrics import background_value, luminance
from .canvas import Canvas
from .model import PARAM_COUNT, BezierStroke, ParamRanges, max_opacity_equivalent
from .raster import DEFAULT_SOFTNESS, coverage_batch

FIT_SAMPLES = 24
FIT_ITERATIONS = 300

# Coarse-to-fine softness ladder, as multiples of the render softness.
# Early stages blur the loss so the geometry can travel; the last stage
# matches the render.
_SOFTNESS_LADDER = (4.0, 2.25, 1.5, 1.0)

# Per-coordinate sign steps in normalized parameter space: grow while the
# gradient sign holds, halve and hold on a flip.
_STEP_INIT = 0.02
_STEP_GROW = 1.2
_STEP_SHRINK = 0.5
_STEP_MAX = 0.15
_STEP_MIN = 1e-4
_FD_STEP = 0.02

# Composited over white, a pixel constrains only opacity*(1-color) per
# channel, so the opacity/color split is a flat direction of the pixel
# loss. The fit pins opacity at 1 and lets color carry the product; any
# renderable target stays reachable.
_OPACITY_DIM = 11
_FREE_DIMS = np.array([d for d in range(PARAM_COUNT) if d != _OPACITY_DIM])

_RETRY_LOSS = 3e-4
_POLISH_LOSS = 2e-4
_POLISH_ITERATIONS = 50

_NEIGHBORS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass(frozen=True)
class FitResult:
    """Best stroke found, its pixel loss, and the best-so-far loss trace."""

    stroke: BezierStroke
    loss: float
    history: np.ndarray


def _batch_loss(zs, ranges, target, samples, softness):
    """MSE against ``target`` pixels for a batch of normalized parameter rows."""
    vectors = ranges.denormalize(zs)
    cov = coverage_batch(vectors, target.shape[0], target.shape[1], samples, softness)
    if target.ndim == 3 and target.shape[2] == 3:
        color = vectors[:, 8:11, None, None] / 255.0
        rendered = 1.0 + cov[:, None] * (color - 1.0)
        diff = rendered - target.transpose(2, 0, 1)[None]
    else:
        flat = target if target.ndim == 2 else target[..., 0]
        luma = vectors[:, 8:11] @ np.array([0.299, 0.587, 0.114]) / 255.0
        rendered = 1.0 + cov * (luma[:, None, None] - 1.0)
        diff = (rendered - flat[None])[:, None]
    return np.mean(diff * diff, axis=(1, 2, 3))


def _foreground(pixels, threshold):
    v = luminance(pixels)
    bg = background_value(v)
    mask = np.abs(v - bg) > threshold
    if not mask.any():
        raise ConfigError("fit target has no foreground above the threshold")
    return mask, v, bg


def _color_at_deepest(pixels, v, bg, ys, xs):
    deep = np.argmax(np.abs(v[ys, xs] - bg))
    if pixels.ndim == 3 and pixels.shape[2] == 3:
        return pixels[ys[deep], xs[deep]] * 255.0
    return np.full(3, v[ys[deep], xs[deep]] * 255.0)


def _finish_guess(ranges, p0, p1, p2, p3, color, width):
    vec = np.concatenate([p0, p1, p2, p3, color, [1.0, width]])
    return np.clip(ranges.normalize(ranges.clamp(vec)), 0.0, 1.0)


def _initial_guess(target, ranges, threshold):
    """Straight-chord start: endpoints at the principal-axis extremes."""
    pixels = target if isinstance(target, np.ndarray) else target.pixels
    mask, v, bg = _foreground(pixels, threshold)
    ys, xs = np.nonzero(mask)
    pts = np.stack([xs + 0.5, ys + 0.5], axis=1).astype(float)
    centered = pts - pts.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    proj = centered @ vt[0]
    e0 = pts[np.argmin(proj)]
    e1 = pts[np.argmax(proj)]
    p1 = e0 + (e1 - e0) / 3.0
    p2 = e0 + 2.0 * (e1 - e0) / 3.0
    chord = float(np.hypot(*(e1 - e0)))
    width = max(1.0, mask.sum() / max(chord, 1.0))
    color = _color_at_deepest(pixels, v, bg, ys, xs)
    return _finish_guess(ranges, e0, p1, p2, e1, color, width)


def _farthest_from(mask, start):
    """BFS over a pixel mask; returns the farthest pixel and parent links."""
    h, w = mask.shape
    dist = {start: 0}
    parent = {start: None}
    queue = deque([start])
    far = start
    while queue:
        cur = queue.popleft()
        for dy, dx in _NEIGHBORS:
            ny, nx = cur[0] + dy, cur[1] + dx
            if 0 <= ny < h and 0 <= nx < w and mask[ny, nx] and (ny, nx) not in dist:
                dist[(ny, nx)] = dist[cur] + 1
                parent[(ny, nx)] = cur
                queue.append((ny, nx))
                if dist[(ny, nx)] > dist[far]:
                    far = (ny, nx)
    return far, parent


def _spine_guess(target, ranges, threshold):
    """Start from the foreground's geodesic diameter path.

    Two BFS passes find the two tips of the painted region even when the
    stroke folds back on itself; the cubic through the path's third points
    gives the control polygon. Interpolated handles are clipped into the
    foreground bounding box.
    """
    pixels = target if isinstance(target, np.ndarray) else target.pixels
    mask, v, bg = _foreground(pixels, threshold)
    ys, xs = np.nonzero(mask)
    tip_a, _ = _farthest_from(mask, (int(ys[0]), int(xs[0])))
    tip_b, parent = _farthest_from(mask, tip_a)
    path = []
    cur = tip_b
    while cur is not None:
        path.append(cur)
        cur = parent[cur]
    pts = np.array([(x + 0.5, y + 0.5) for y, x in reversed(path)], dtype=float)
    n = len(pts)
    q0, q3 = pts[0], pts[-1]
    q1, q2 = pts[n // 3], pts[(2 * n) // 3]
    p1 = (-5.0 * q0 + 18.0 * q1 - 9.0 * q2 + 2.0 * q3) / 6.0
    p2 = (2.0 * q0 - 9.0 * q1 + 18.0 * q2 - 5.0 * q3) / 6.0
    lo = np.array([xs.min() + 0.5, ys.min() + 0.5])
    hi = np.array([xs.max() + 0.5, ys.max() + 0.5])
    p1 = np.clip(p1, lo, hi)
    p2 = np.clip(p2, lo, hi)
    width = max(1.0, mask.sum() / max(n, 1.0))
    color = _color_at_deepest(pixels, v, bg, ys, xs)
    return _finish_guess(ranges, q0, p1, p2, q3, color, width)


def _descend(z, grad_ranges, grad_target, ranges, target, grad_softness, final_softness,
             iterations, samples, best, best_z, history,
             step_init=_STEP_INIT, step_max=_STEP_MAX):
    """Sign-step descent with per-coordinate step adaptation on the free dims."""
    n_free = len(_FREE_DIMS)
    probes = np.eye(PARAM_COUNT)[_FREE_DIMS]
    steps = np.full(n_free, step_init)
    prev_sign = np.zeros(n_free)
    idx = np.arange(n_free)
    for _ in range(iterations):
        plus = np.clip(z[None] + _FD_STEP * probes, 0.0, 1.0)
        minus = np.clip(z[None] - _FD_STEP * probes, 0.0, 1.0)
        losses = _batch_loss(np.concatenate([plus, minus]), grad_ranges, grad_target,
                             samples, grad_softness)
        gaps = plus[idx, _FREE_DIMS] - minus[idx, _FREE_DIMS]
        grad = (losses[:n_free] - losses[n_free:]) / np.where(gaps > 0, gaps, 1.0)
        sign = np.sign(grad)
        flipped = prev_sign * sign < 0
        steps[flipped] = np.maximum(steps[flipped] * _STEP_SHRINK, _STEP_MIN)
        held = prev_sign * sign > 0
        steps[held] = np.minimum(steps[held] * _STEP_GROW, step_max)
        z[_FREE_DIMS] = np.clip(z[_FREE_DIMS] - np.where(flipped, 0.0, sign * steps), 0.0, 1.0)
        prev_sign = np.where(flipped, 0.0, sign)
        cur = float(_batch_loss(z[None], ranges, target, samples, final_softness)[0])
        if cur < best:
            best = cur
            best_z = z.copy()
        history.append(best)
    return z, best, best_z


def fit_stroke(target: Canvas, *, iterations: int = FIT_ITERATIONS, rng=None,
               samples: int = FIT_SAMPLES, softness: float = DEFAULT_SOFTNESS,
               foreground_threshold: float = 0.1,
               init: BezierStroke | None = None) -> FitResult:
    """Recover stroke parameters whose rendering matches ``target``.

    Coordinate-wise finite differences drive the descent; the loss is
    blurred through a softness ladder and evaluated on a half-resolution
    grid, while acceptance always scores the full-resolution render at
    the requested softness. A geodesic spine start is tried first and a
    straight-chord start serves as fallback when the first stall is
    above tolerance. ``rng`` is accepted for interface stability; the
    optimizer is deterministic.

    A warm start passed as ``init`` is mapped to its opacity-1
    equivalent (same rendering) and its loss seeds the best-so-far
    tracking, so refinement never returns anything worse than ``init``.
    """
    if iterations < len(_SOFTNESS_LADDER):
        raise ConfigError("iterations must cover the softness ladder")
    pixels = target.pixels
    side = max(pixels.shape[:2])
    ranges = ParamRanges.for_canvas(side)
    coarse = pixels.shape[0] % 2 == 0 and pixels.shape[1] % 2 == 0
    if coarse:
        ch, cw = pixels.shape[0] // 2, pixels.shape[1] // 2
        grad_target = pixels.reshape(ch, 2, cw, 2, -1).mean(axis=(1, 3))
        if pixels.ndim == 2:
            grad_target = grad_target[..., 0]
        grad_ranges = ParamRanges.for_canvas(side // 2)
        grad_scale = 0.5
    else:
        grad_target = pixels
        grad_ranges = ranges
        grad_scale = 1.0
    per_stage = iterations // len(_SOFTNESS_LADDER)
    history: list[float] = []

    def run(z0):
        z = z0.copy()
        z[_OPACITY_DIM] = 1.0
        best = float(_batch_loss(z[None], ranges, pixels, samples, softness)[0])
        best_z = z.copy()
        for rung in _SOFTNESS_LADDER:
            z, best, best_z = _descend(
                z, grad_ranges, grad_target, ranges, pixels,
                rung * softness * grad_scale, softness,
                per_stage, samples, best, best_z, history)
        return best, best_z

    starts = [_spine_guess(pixels, ranges, foreground_threshold)]
    if init is not None:
        warm = max_opacity_equivalent(init)
        starts.insert(0, np.clip(ranges.normalize(ranges.clamp(warm.vector)), 0.0, 1.0))
    best, best_z = run(starts[0])
    for z0 in starts[1:]:
        if best <= _RETRY_LOSS:
            break
        other_best, other_z = run(z0)
        if other_best < best:
            best, best_z = other_best, other_z
    if best > _RETRY_LOSS:
        retry_best, retry_z = run(_initial_guess(pixels, ranges, foreground_threshold))
        if retry_best < best:
            best, best_z = retry_best, retry_z
    if best > _POLISH_LOSS:
        _, best, best_z = _descend(
            best_z.copy(), ranges, pixels, ranges, pixels, softness, softness,
            _POLISH_ITERATIONS, samples, best, best_z, history,
            step_init=0.01, step_max=0.05)
    running = np.minimum.accumulate(np.asarray(history))
    return FitResult(BezierStroke(ranges.denormalize(best_z)), best, running)
