"""Stroke set prediction: matching and ranking losses, compositing, layered painting."""

from .compose import (
    PaintResult,
    PlacedStroke,
    compose_textured,
    composite,
    layered_paint,
    order_strokes,
    place_predictions,
    padded_side,
    realize_stroke,
    resize_canvas,
)
from .losses import (
    GroundTruthStroke,
    MatchConfig,
    StrokePrediction,
    bce,
    cosine_distance,
    hungarian_assignment,
    matching_loss,
    p_minus,
    pairwise_cost,
    ranking_loss,
    total_predictor_loss,
)
from .predictor import (
    ConditionProjector,
    StrokePredictor,
    loss_and_grad,
    predict_strokes,
)
from .training import (
    PredictorTraining,
    ground_truth_from_stroke,
    make_scene,
    pairwise_rank_error,
    scene_source,
    stroke_centroid,
    train_predictor,
)

__all__ = [
    "ConditionProjector",
    "GroundTruthStroke",
    "MatchConfig",
    "PaintResult",
    "PlacedStroke",
    "PredictorTraining",
    "StrokePrediction",
    "StrokePredictor",
    "bce",
    "compose_textured",
    "composite",
    "cosine_distance",
    "ground_truth_from_stroke",
    "hungarian_assignment",
    "layered_paint",
    "loss_and_grad",
    "make_scene",
    "matching_loss",
    "order_strokes",
    "p_minus",
    "padded_side",
    "pairwise_cost",
    "pairwise_rank_error",
    "place_predictions",
    "predict_strokes",
    "ranking_loss",
    "realize_stroke",
    "resize_canvas",
    "scene_source",
    "stroke_centroid",
    "total_predictor_loss",
    "train_predictor",
]
