"""Sample strokes whose renderings are clean fitting and training targets."""

from __future__ import annotations

import numpy as np

from ..errors import NumericalError
from ..metrics import alpha_iou, connected_regions, label_components
from .canvas import Canvas
from .model import BezierStroke, ParamRanges, generate_random_stroke, max_opacity_equivalent
from .raster import DEFAULT_SAMPLES, DEFAULT_SOFTNESS, rasterize_stroke


def generate_visible_stroke(rng: np.random.Generator, side: int, *,
                            channels: int = 3,
                            min_core_pixels: int = 25,
                            identifiable_iou: float | None = 0.9,
                            max_tries: int = 1000,
                            samples: int = DEFAULT_SAMPLES,
                            softness: float = DEFAULT_SOFTNESS,
                            ) -> tuple[BezierStroke, Canvas, np.ndarray]:
    """Rejection-sample a stroke that renders as one solid, recoverable mark.

    Accepts a draw only when the canvas shows a single connected
    foreground region, the alpha core (coverage >= 0.5) is one component
    of at least ``min_core_pixels``, and, unless ``identifiable_iou`` is
    None, the alpha mask survives the opacity-maximizing
    reparameterization that leaves the rendered image unchanged. Targets
    failing that last check cannot be recovered from pixels alone.
    """
    ranges = ParamRanges.for_canvas(side)
    shape = (side, side)
    for _ in range(max_tries):
        stroke = generate_random_stroke(rng, ranges)
        canvas, alpha = rasterize_stroke(stroke, shape, channels=channels,
                                         samples=samples, softness=softness)
        core = alpha >= 0.5
        if int(core.sum()) < min_core_pixels:
            continue
        _, core_count = label_components(core)
        if core_count != 1:
            continue
        if connected_regions(canvas.pixels).region_count != 1:
            continue
        if identifiable_iou is not None:
            _, twin_alpha = rasterize_stroke(max_opacity_equivalent(stroke), shape,
                                             channels=channels, samples=samples,
                                             softness=softness)
            if alpha_iou(alpha, twin_alpha) < identifiable_iou:
                continue
        return stroke, canvas, alpha
    raise NumericalError(f"no acceptable stroke after {max_tries} draws")
