"""Rank-ordered compositing and coarse-to-fine grid painting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from ..metrics import mse
from ..strokes.canvas import Canvas
from ..strokes.model import BezierStroke
from ..strokes.raster import DEFAULT_SAMPLES, DEFAULT_SOFTNESS, compose_over, stroke_alpha
from .losses import StrokePrediction
from .predictor import StrokePredictor, predict_strokes


@dataclass(frozen=True)
class PlacedStroke:
    """A prediction realized at its position on the full canvas."""

    stroke: BezierStroke
    prediction: StrokePrediction
    layer: int = 0
    patch_row: int = 0
    patch_col: int = 0
    slot: int = 0

    @property
    def scr_r(self) -> float:
        return self.prediction.scr_r

    @property
    def d(self) -> float:
        return self.prediction.d


def realize_stroke(prediction: StrokePrediction, patch_side: float,
                   origin: tuple[float, float] = (0.0, 0.0)) -> BezierStroke:
    """Move a patch-centered prediction to canvas coordinates.

    The shifts displace the stroke from the patch center in units of the
    patch side; origin is the patch's top-left corner (x, y) on the canvas.
    """
    if patch_side <= 0:
        raise ConfigError(f"patch side must be positive, got {patch_side}")
    vec = prediction.params.copy()
    vec[0:8:2] += (prediction.x_shift - 0.5) * patch_side + origin[0]
    vec[1:8:2] += (prediction.y_shift - 0.5) * patch_side + origin[1]
    return BezierStroke(vec)


def order_strokes(placed: list[PlacedStroke], threshold: float = 0.5) -> list[PlacedStroke]:
    """Drawing order: presence at or above threshold, ascending rank score.

    The sort is stable, so equal scores keep the incoming order; callers
    list strokes in patch raster order and slot order to fix ties.
    """
    kept = [p for p in placed if p.d >= threshold]
    return sorted(kept, key=lambda p: p.scr_r)


def composite(base: Canvas, placed: list[PlacedStroke], *, threshold: float = 0.5,
              samples: int = DEFAULT_SAMPLES, softness: float = DEFAULT_SOFTNESS) -> Canvas:
    """Alpha-over fold of the kept strokes in drawing order."""
    out = base.copy()
    for item in order_strokes(placed, threshold):
        out = compose_over(out, item.stroke, samples, softness)
    return out


def compose_textured(base: Canvas, stroke: BezierStroke, texture: Canvas,
                     samples: int = DEFAULT_SAMPLES,
                     softness: float = DEFAULT_SOFTNESS) -> Canvas:
    """Composite one stroke whose color is a texture warped onto its extent.

    Coverage comes from the stroke geometry as usual, but instead of the
    flat stroke color each pixel samples the texture stretched over the
    coverage bounding box (nearest neighbor, edge-clamped outside it).
    Lets a generated image stand in for a stroke's appearance.
    """
    if texture.channels != base.channels:
        raise ConfigError(
            f"texture has {texture.channels} channels, canvas has {base.channels}"
        )
    alpha = stroke_alpha(stroke, (base.height, base.width), samples, softness)
    core = alpha >= 0.5 * stroke.opacity
    if not core.any():
        core = alpha >= 0.5 * alpha.max()
    rows = np.flatnonzero(core.any(axis=1))
    cols = np.flatnonzero(core.any(axis=0))
    y0, y1 = int(rows[0]), int(rows[-1])
    x0, x1 = int(cols[0]), int(cols[-1])
    ys = np.arange(base.height, dtype=np.float64)
    xs = np.arange(base.width, dtype=np.float64)
    v = np.clip((ys - y0) / max(y1 - y0, 1), 0.0, 1.0)
    u = np.clip((xs - x0) / max(x1 - x0, 1), 0.0, 1.0)
    tex_rows = np.rint(v * (texture.height - 1)).astype(int)
    tex_cols = np.rint(u * (texture.width - 1)).astype(int)
    warped = texture.pixels[np.ix_(tex_rows, tex_cols)]
    out = alpha[:, :, None] * warped + (1.0 - alpha[:, :, None]) * base.pixels
    return Canvas(out)


def place_predictions(predictions: list[StrokePrediction], patch_side: float,
                      origin: tuple[float, float] = (0.0, 0.0), layer: int = 0,
                      patch: tuple[int, int] = (0, 0)) -> list[PlacedStroke]:
    """Realize one patch's prediction slots against the full canvas."""
    return [
        PlacedStroke(
            stroke=realize_stroke(pred, patch_side, origin),
            prediction=pred,
            layer=layer,
            patch_row=patch[0],
            patch_col=patch[1],
            slot=slot,
        )
        for slot, pred in enumerate(predictions)
    ]


def resize_canvas(canvas: Canvas, side: int) -> Canvas:
    """Square resize by an integer factor: block means down, repeats up."""
    if canvas.height != canvas.width:
        raise ConfigError(f"resize expects a square canvas, got {canvas.height}x{canvas.width}")
    src = canvas.height
    if src == side:
        return canvas.copy()
    if src % side == 0:
        factor = src // side
        blocks = canvas.pixels.reshape(side, factor, side, factor, canvas.channels)
        return Canvas(blocks.mean(axis=(1, 3)))
    if side % src == 0:
        factor = side // src
        return Canvas(np.repeat(np.repeat(canvas.pixels, factor, axis=0), factor, axis=1))
    raise ConfigError(f"no integer ratio between canvas side {src} and {side}")


def padded_side(height: int, width: int, layers: int, input_side: int) -> int:
    """Smallest working canvas side covering the target.

    Every layer-k patch (side S / 2^k) must relate to the predictor input
    by an integer factor, so the side is either a power of two or a
    multiple of input_side * 2^(layers-1), whichever padding is smaller.
    """
    need = max(height, width, 2 ** (layers - 1))
    power = 1
    while power < need:
        power *= 2
    grid = input_side * 2 ** (layers - 1)
    multiple = grid * ((need + grid - 1) // grid)
    return min(power, multiple)


@dataclass
class PaintResult:
    """Output of layered painting: final canvas, per-layer states, draw log."""

    final: Canvas
    intermediates: list[Canvas] = field(default_factory=list)
    strokes: list[PlacedStroke] = field(default_factory=list)
    layer_mse: list[float] = field(default_factory=list)
    padded_to: int = 0


def layered_paint(target: Canvas, predictor: StrokePredictor, layers: int, *,
                  threshold: float = 0.5, samples: int = DEFAULT_SAMPLES,
                  softness: float = DEFAULT_SOFTNESS) -> PaintResult:
    """Coarse-to-fine painting over a 2^k x 2^k patch grid per layer.

    The working canvas starts white, padded so every patch resizes to the
    predictor input by an integer factor; the target sits at its top-left
    corner. Each layer predicts strokes per patch, composites the kept
    ones in rank order (ties in patch raster order, then slot), and logs
    the cropped canvas plus its squared error against the target.
    """
    if layers < 1:
        raise ConfigError(f"need at least one layer, got {layers}")
    if target.channels != predictor.arch["canvas_channels"]:
        raise ConfigError(
            f"target has {target.channels} channels, predictor wants "
            f"{predictor.arch['canvas_channels']}"
        )
    input_side = predictor.arch["input_side"]
    side = padded_side(target.height, target.width, layers, input_side)
    padded = Canvas.white((side, side), target.channels)
    padded.pixels[: target.height, : target.width] = target.pixels
    current = Canvas.white((side, side), target.channels)

    result = PaintResult(final=target, padded_to=side)
    for layer in range(layers):
        grid = 2**layer
        patch = side // grid
        placed: list[PlacedStroke] = []
        for row in range(grid):
            for col in range(grid):
                ys = slice(row * patch, (row + 1) * patch)
                xs = slice(col * patch, (col + 1) * patch)
                cur = resize_canvas(Canvas(current.pixels[ys, xs]), input_side)
                tgt = resize_canvas(Canvas(padded.pixels[ys, xs]), input_side)
                preds = predict_strokes(predictor, cur, tgt, patch_side=patch)
                placed.extend(place_predictions(
                    preds, patch, origin=(col * patch, row * patch),
                    layer=layer, patch=(row, col),
                ))
        ordered = order_strokes(placed, threshold)
        for item in ordered:
            current = compose_over(current, item.stroke, samples, softness)
        result.strokes.extend(ordered)
        cropped = Canvas(current.pixels[: target.height, : target.width].copy())
        result.intermediates.append(cropped)
        result.layer_mse.append(mse(cropped.pixels, target.pixels))
    result.final = result.intermediates[-1]
    return result
