"""Set-matching, ranking, and combined objectives for stroke prediction."""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..errors import ConfigError
from ..strokes.model import PARAM_COUNT, SPATIAL_DIMS

PROB_FLOOR = 1e-7

# P-minus layout: 13 stroke parameters then (x_shift, y_shift)
P_MINUS_DIM = PARAM_COUNT + 2


@dataclass(frozen=True)
class MatchConfig:
    """Weights of the matching/ranking objective and the prediction budget.

    lambda_l1, lambda_cos and lambda_presence form the matching weight
    vector; lambda_rank scales the ranking term in the total objective.
    """

    lambda_l1: float = 5.0
    lambda_cos: float = 10.0
    lambda_presence: float = 10.0
    lambda_rank: float = 5.0
    margin: float = 0.125
    max_strokes: int = 8
    presence_threshold: float = 0.5

    def __post_init__(self) -> None:
        weights = (self.lambda_l1, self.lambda_cos, self.lambda_presence, self.lambda_rank)
        if any(w < 0 for w in weights):
            raise ConfigError("loss weights must be nonnegative")
        if self.margin <= 0:
            raise ConfigError(f"margin must be positive, got {self.margin}")
        if self.max_strokes < 1:
            raise ConfigError(f"max_strokes must be at least 1, got {self.max_strokes}")
        if not 0.0 <= self.presence_threshold <= 1.0:
            raise ConfigError("presence threshold must lie in [0, 1]")

    @property
    def lambda_m(self) -> tuple[float, float, float]:
        """The matching weight vector (L1, cosine, presence)."""
        return (self.lambda_l1, self.lambda_cos, self.lambda_presence)


def p_minus(params: np.ndarray, x_shift: float, y_shift: float, side: float) -> np.ndarray:
    """Scale-comparable (c_p, x_shift, y_shift) vector.

    Pixel-valued dimensions are divided by the canvas side, colors by 255;
    opacity and the shifts are already normalized.
    """
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (PARAM_COUNT,):
        raise ConfigError(f"expected {PARAM_COUNT} stroke parameters, got {params.shape}")
    if side <= 0:
        raise ConfigError(f"canvas side must be positive, got {side}")
    scale = np.where(SPATIAL_DIMS, float(side), 1.0)
    scale[8:11] = 255.0
    return np.concatenate([params / scale, [float(x_shift), float(y_shift)]])


@dataclass(frozen=True)
class StrokePrediction:
    """One predicted stroke: parameters, placement, rank score, presence.

    params are pixel units at the prediction's patch side, describing the
    stroke centered on the patch; the shifts place its center on the patch
    in normalized units, 0.5 meaning no displacement.
    """

    params: np.ndarray
    x_shift: float
    y_shift: float
    scr_r: float
    d: float

    def __post_init__(self) -> None:
        params = np.asarray(self.params, dtype=np.float64)
        if params.shape != (PARAM_COUNT,):
            raise ConfigError(f"expected {PARAM_COUNT} stroke parameters, got {params.shape}")
        object.__setattr__(self, "params", params)
        if not 0.0 < self.scr_r < 1.0:
            raise ConfigError(f"ranking score must lie strictly in (0, 1), got {self.scr_r}")
        if not 0.0 <= self.d <= 1.0:
            raise ConfigError(f"presence confidence must lie in [0, 1], got {self.d}")

    def p_minus(self, side: float) -> np.ndarray:
        return p_minus(self.params, self.x_shift, self.y_shift, side)


@dataclass(frozen=True)
class GroundTruthStroke:
    """A reference stroke with its drawing position; smaller index paints earlier."""

    params: np.ndarray
    x_shift: float
    y_shift: float
    order_index: int
    d: float = 1.0

    def __post_init__(self) -> None:
        params = np.asarray(self.params, dtype=np.float64)
        if params.shape != (PARAM_COUNT,):
            raise ConfigError(f"expected {PARAM_COUNT} stroke parameters, got {params.shape}")
        object.__setattr__(self, "params", params)
        if self.order_index < 1 or self.order_index != int(self.order_index):
            raise ConfigError(f"order index must be a positive integer, got {self.order_index}")
        if self.d not in (0.0, 1.0):
            raise ConfigError(f"presence flag must be 0 or 1, got {self.d}")

    def p_minus(self, side: float) -> np.ndarray:
        return p_minus(self.params, self.x_shift, self.y_shift, side)


def bce(target: float, prob: float) -> tuple[float, float]:
    """Binary cross-entropy and its d/dprob, with the probability clamped."""
    clamped = min(max(prob, PROB_FLOOR), 1.0 - PROB_FLOOR)
    loss = -(target * np.log(clamped) + (1.0 - target) * np.log1p(-clamped))
    if prob == clamped:
        grad = (clamped - target) / (clamped * (1.0 - clamped))
    else:
        grad = 0.0
    return float(loss), float(grad)


def cosine_distance(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray]:
    """1 - cos(a, b) and its gradient in b; zero-norm vectors are maximally far."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ConfigError(f"vectors must share a 1-D shape, got {a.shape} and {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 1.0, np.zeros_like(b)
    dot = float(a @ b)
    grad = -(a / (na * nb) - dot * b / (na * nb**3))
    return 1.0 - dot / (na * nb), grad


def pairwise_cost(pred_p: np.ndarray, pred_d: float, gt_p: np.ndarray, gt_d: float,
                  cfg: MatchConfig) -> float:
    """Weighted L1 + cosine distance + presence cross-entropy for one pair.

    Expects vectors already on comparable scales (see p_minus).
    """
    pred_p = np.asarray(pred_p, dtype=np.float64)
    gt_p = np.asarray(gt_p, dtype=np.float64)
    if pred_p.shape != gt_p.shape:
        raise ConfigError(f"pair shapes differ: {pred_p.shape} vs {gt_p.shape}")
    l1 = float(np.sum(np.abs(gt_p - pred_p)))
    cos_dist, _ = cosine_distance(gt_p, pred_p)
    presence, _ = bce(gt_d, pred_d)
    return cfg.lambda_l1 * l1 + cfg.lambda_cos * cos_dist + cfg.lambda_presence * presence


def hungarian_assignment(cost: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-cost injective assignment of rows to columns."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ConfigError(f"cost matrix must be 2-D, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ConfigError("cost matrix contains non-finite entries")
    rows, cols = linear_sum_assignment(cost)
    return rows, cols


def matching_loss(pred_p: np.ndarray, pred_d: np.ndarray, gt_p: np.ndarray,
                  cfg: MatchConfig) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Assignment-optimal matching loss with gradients in the predictions.

    Ground-truth strokes are all present (d = 1); every unmatched
    prediction pays the cross-entropy of claiming a stroke where none is.
    Returns (loss, d loss/d pred_p, d loss/d pred_d, matched prediction
    index per ground-truth row; empty without ground-truth strokes).
    """
    pred_p = np.asarray(pred_p, dtype=np.float64)
    pred_d = np.asarray(pred_d, dtype=np.float64)
    if pred_p.ndim != 2 or pred_d.shape != (pred_p.shape[0],):
        raise ConfigError("predictions must be a 2-D vector stack with one confidence each")
    gt_p = np.asarray(gt_p, dtype=np.float64)
    if gt_p.size == 0:
        gt_p = gt_p.reshape(0, pred_p.shape[1])
    if gt_p.ndim != 2 or gt_p.shape[1] != pred_p.shape[1]:
        raise ConfigError(f"ground-truth stack {gt_p.shape} does not match predictions {pred_p.shape}")
    m = pred_p.shape[0]
    n = gt_p.shape[0]
    if n > m:
        raise ConfigError(f"{n} ground-truth strokes exceed {m} predictions")
    grad_p = np.zeros_like(pred_p)
    grad_d = np.zeros_like(pred_d)
    matched = np.zeros(m, dtype=bool)
    assignment = np.empty(0, dtype=np.int64)
    if n:
        cost = np.empty((n, m))
        for i in range(n):
            for j in range(m):
                cost[i, j] = pairwise_cost(pred_p[j], float(pred_d[j]), gt_p[i], 1.0, cfg)
        rows, cols = hungarian_assignment(cost)
        assignment = np.empty(n, dtype=np.int64)
        assignment[rows] = cols
    total = 0.0
    for i in range(n):
        j = assignment[i]
        matched[j] = True
        total += cfg.lambda_l1 * float(np.sum(np.abs(gt_p[i] - pred_p[j])))
        grad_p[j] += cfg.lambda_l1 * np.sign(pred_p[j] - gt_p[i])
        cos_dist, cos_grad = cosine_distance(gt_p[i], pred_p[j])
        total += cfg.lambda_cos * cos_dist
        grad_p[j] += cfg.lambda_cos * cos_grad
        presence, presence_grad = bce(1.0, float(pred_d[j]))
        total += cfg.lambda_presence * presence
        grad_d[j] += cfg.lambda_presence * presence_grad
    for j in range(m):
        if matched[j]:
            continue
        absence, absence_grad = bce(0.0, float(pred_d[j]))
        total += cfg.lambda_presence * absence
        grad_d[j] += cfg.lambda_presence * absence_grad
    return float(total), grad_p, grad_d, assignment


def ranking_loss(scr: np.ndarray, order: np.ndarray,
                 margin: float) -> tuple[float, np.ndarray]:
    """Pairwise hinge pushing earlier strokes toward lower scores.

    For every earlier/later pair the later score must exceed the earlier
    one by the order gap times the margin; violations are summed and
    normalized by the number of pairs. Fewer than two strokes cost nothing.
    """
    scr = np.asarray(scr, dtype=np.float64)
    order = np.asarray(order, dtype=np.float64)
    if scr.shape != order.shape or scr.ndim != 1:
        raise ConfigError(f"scores {scr.shape} and orders {order.shape} must be equal 1-D")
    n = len(scr)
    grad = np.zeros_like(scr)
    if n < 2:
        return 0.0, grad
    if len(np.unique(order)) != n:
        raise ConfigError("order indices must be distinct")
    pairs = comb(n, 2)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if order[i] < order[j]:
                hinge = scr[i] - scr[j] + (order[j] - order[i]) * margin
                if hinge > 0:
                    total += hinge
                    grad[i] += 1.0 / pairs
                    grad[j] -= 1.0 / pairs
    return total / pairs, grad


def total_predictor_loss(pred_p: np.ndarray, pred_d: np.ndarray, pred_scr: np.ndarray,
                         gt_p: np.ndarray, gt_order: np.ndarray, cfg: MatchConfig,
                         ) -> tuple[float, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Matching loss plus the weighted ranking loss, with gradients.

    The ranking term compares the scores of the predictions matched to
    ground-truth strokes against the ground-truth drawing order.
    Returns (loss, grad pred_p, grad pred_d, grad pred_scr, assignment).
    """
    pred_scr = np.asarray(pred_scr, dtype=np.float64)
    match, grad_p, grad_d, assignment = matching_loss(pred_p, pred_d, gt_p, cfg)
    grad_scr = np.zeros_like(pred_scr)
    rank = 0.0
    if len(assignment) >= 2:
        gt_order = np.asarray(gt_order, dtype=np.float64)
        rank, rank_grad = ranking_loss(pred_scr[assignment], gt_order, cfg.margin)
        for gt_i, pred_j in enumerate(assignment):
            grad_scr[pred_j] += cfg.lambda_rank * rank_grad[gt_i]
    loss = match + cfg.lambda_rank * rank
    return float(loss), grad_p, grad_d, grad_scr, assignment
