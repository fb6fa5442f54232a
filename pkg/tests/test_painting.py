"""Matching/ranking losses, the stroke predictor, compositing, layered painting."""

import itertools
from math import comb

import numpy as np
import pytest

from strokecraft.errors import ConfigError, NumericalError
from strokecraft.painting import (
    ConditionProjector,
    GroundTruthStroke,
    MatchConfig,
    StrokePrediction,
    StrokePredictor,
    compose_textured,
    composite,
    cosine_distance,
    ground_truth_from_stroke,
    hungarian_assignment,
    layered_paint,
    loss_and_grad,
    make_scene,
    matching_loss,
    order_strokes,
    p_minus,
    padded_side,
    pairwise_cost,
    pairwise_rank_error,
    place_predictions,
    predict_strokes,
    ranking_loss,
    realize_stroke,
    resize_canvas,
    scene_source,
    stroke_centroid,
    total_predictor_loss,
    train_predictor,
)
from strokecraft.diffusion.denoiser import Denoiser
from strokecraft.strokes import (
    BezierStroke,
    Canvas,
    ParamRanges,
    compose_over,
    generate_random_stroke,
    stroke_alpha,
)

CFG = MatchConfig()


def small_predictor(seed=3, side=8, max_strokes=3):
    rng = np.random.default_rng(seed)
    return StrokePredictor.create(rng, input_side=side, conv_channels=(4, 6),
                                  fc_hidden=16, max_strokes=max_strokes)


def tiny_scene(seed, side=8, count=2):
    """Hand-assembled scene at a side too small for the visible-stroke sampler."""
    rng = np.random.default_rng(seed)
    ranges = ParamRanges.for_canvas(side)
    target = Canvas.white(side)
    gts = []
    for index in range(1, count + 1):
        stroke = generate_random_stroke(rng, ranges)
        target = compose_over(target, stroke)
        gts.append(ground_truth_from_stroke(stroke.vector, side, index))
    return Canvas.white(side), target, gts


class TestMatchConfig:
    def test_defaults(self):
        assert CFG.lambda_m == (5.0, 10.0, 10.0)
        assert CFG.lambda_rank == 5.0
        assert CFG.margin == 0.125
        assert CFG.max_strokes == 8

    @pytest.mark.parametrize("kwargs", [
        {"lambda_l1": -1.0},
        {"lambda_rank": -0.5},
        {"margin": 0.0},
        {"margin": -1.0},
        {"max_strokes": 0},
        {"presence_threshold": 1.5},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigError):
            MatchConfig(**kwargs)


class TestPMinus:
    def test_scales_per_dimension(self):
        params = np.array([16.0, 8.0, 4.0, 2.0, 1.0, 32.0, 64.0, 128.0,
                           255.0, 51.0, 102.0, 0.5, 8.0])
        vec = p_minus(params, 0.25, 0.75, 32.0)
        assert vec.shape == (15,)
        np.testing.assert_allclose(vec[:8], params[:8] / 32.0)
        np.testing.assert_allclose(vec[8:11], [1.0, 0.2, 0.4])
        assert vec[11] == 0.5
        assert vec[12] == 8.0 / 32.0
        assert vec[13] == 0.25 and vec[14] == 0.75

    def test_rejects_bad_inputs(self):
        with pytest.raises(ConfigError):
            p_minus(np.zeros(12), 0.5, 0.5, 32.0)
        with pytest.raises(ConfigError):
            p_minus(np.zeros(13), 0.5, 0.5, 0.0)


class TestDomainTypes:
    def test_prediction_invariants(self):
        params = np.zeros(13)
        StrokePrediction(params=params, x_shift=0.5, y_shift=0.5, scr_r=0.5, d=0.0)
        with pytest.raises(ConfigError):
            StrokePrediction(params=params, x_shift=0.5, y_shift=0.5, scr_r=0.0, d=0.5)
        with pytest.raises(ConfigError):
            StrokePrediction(params=params, x_shift=0.5, y_shift=0.5, scr_r=1.0, d=0.5)
        with pytest.raises(ConfigError):
            StrokePrediction(params=params, x_shift=0.5, y_shift=0.5, scr_r=0.5, d=1.1)
        with pytest.raises(ConfigError):
            StrokePrediction(params=np.zeros(12), x_shift=0.5, y_shift=0.5, scr_r=0.5, d=1.0)

    def test_ground_truth_invariants(self):
        params = np.zeros(13)
        GroundTruthStroke(params=params, x_shift=0.5, y_shift=0.5, order_index=1, d=0.0)
        with pytest.raises(ConfigError):
            GroundTruthStroke(params=params, x_shift=0.5, y_shift=0.5, order_index=0)
        with pytest.raises(ConfigError):
            GroundTruthStroke(params=params, x_shift=0.5, y_shift=0.5, order_index=1, d=0.5)


class TestPairwiseCost:
    def test_identity_pair_costs_only_the_clamp(self):
        vec = np.linspace(0.1, 1.0, 15)
        cost = pairwise_cost(vec, 1.0, vec, 1.0, CFG)
        assert cost == pytest.approx(10.0 * -np.log1p(-1e-7), rel=1e-9)
        assert cost < 1e-5

    def test_cosine_term_is_scale_invariant(self):
        cfg = MatchConfig(lambda_l1=0.0, lambda_presence=0.0)
        rng = np.random.default_rng(0)
        vec = rng.normal(size=15)
        base = pairwise_cost(2.0 * vec, 1.0, vec, 1.0, cfg)
        assert base == pytest.approx(0.0, abs=1e-12)
        other = rng.normal(size=15)
        for scale in (0.01, 3.0, 250.0):
            assert pairwise_cost(scale * other, 1.0, vec, 1.0, cfg) == pytest.approx(
                pairwise_cost(other, 1.0, vec, 1.0, cfg), abs=1e-12
            )

    def test_hand_example_totals_twenty(self):
        gt = np.zeros(15)
        gt[0] = 1.0
        pred = np.zeros(15)
        pred[1] = 1.0
        assert pairwise_cost(pred, 1.0, gt, 1.0, CFG) == pytest.approx(20.0, abs=1e-5)

    def test_zero_norm_vector_is_maximally_far(self):
        cfg = MatchConfig(lambda_l1=0.0, lambda_presence=0.0)
        assert pairwise_cost(np.zeros(15), 1.0, np.ones(15), 1.0, cfg) == pytest.approx(10.0)
        assert pairwise_cost(np.ones(15), 1.0, np.zeros(15), 1.0, cfg) == pytest.approx(10.0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            pairwise_cost(np.zeros(14), 1.0, np.zeros(15), 1.0, CFG)


class TestCosineDistance:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            a = rng.normal(size=6)
            b = rng.normal(size=6)
            _, grad = cosine_distance(a, b)
            h = 1e-6
            for k in range(6):
                bp = b.copy()
                bp[k] += h
                bm = b.copy()
                bm[k] -= h
                fd = (cosine_distance(a, bp)[0] - cosine_distance(a, bm)[0]) / (2 * h)
                assert grad[k] == pytest.approx(fd, abs=1e-6)

    def test_zero_norm_has_zero_gradient(self):
        dist, grad = cosine_distance(np.zeros(4), np.ones(4))
        assert dist == 1.0
        np.testing.assert_array_equal(grad, np.zeros(4))


def brute_force_assignment(cost):
    """Exhaustive minimum over injective row-to-column maps."""
    n, m = cost.shape
    best = None
    best_cols = None
    for cols in itertools.permutations(range(m), n):
        total = sum(cost[i, c] for i, c in enumerate(cols))
        if best is None or total < best:
            best = total
            best_cols = cols
    return best, best_cols


class TestHungarian:
    def test_single_pair(self):
        rows, cols = hungarian_assignment(np.array([[3.0]]))
        assert list(rows) == [0] and list(cols) == [0]

    def test_two_by_two(self):
        cost = np.array([[1.0, 2.0], [2.0, 1.0]])
        rows, cols = hungarian_assignment(cost)
        assert cost[rows, cols].sum() == 2.0

    def test_matches_brute_force_on_square_matrices(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            cost = rng.uniform(0.0, 10.0, (6, 6))
            rows, cols = hungarian_assignment(cost)
            assert cost[rows, cols].sum() == pytest.approx(brute_force_assignment(cost)[0])

    def test_matches_brute_force_on_all_sizes_to_seven(self):
        rng = np.random.default_rng(8)
        for n in range(1, 8):
            for _ in range(30):
                cost = rng.uniform(0.0, 5.0, (n, n))
                rows, cols = hungarian_assignment(cost)
                assert cost[rows, cols].sum() == pytest.approx(brute_force_assignment(cost)[0])

    def test_matches_brute_force_on_rectangles(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            cost = rng.uniform(0.0, 5.0, (3, 5))
            rows, cols = hungarian_assignment(cost)
            assert cost[rows, cols].sum() == pytest.approx(brute_force_assignment(cost)[0])

    def test_rejects_bad_matrices(self):
        with pytest.raises(ConfigError):
            hungarian_assignment(np.array([1.0, 2.0]))
        with pytest.raises(ConfigError):
            hungarian_assignment(np.array([[1.0, np.inf], [0.0, 1.0]]))
        with pytest.raises(ConfigError):
            hungarian_assignment(np.array([[np.nan]]))


class TestMatchingLoss:
    def test_perfect_predictions_cost_almost_nothing(self):
        rng = np.random.default_rng(2)
        gt = rng.uniform(0.1, 1.0, (3, 15))
        loss, grad_p, grad_d, assignment = matching_loss(gt, np.ones(3), gt, CFG)
        assert loss < 1e-5
        assert sorted(assignment) == [0, 1, 2]

    def test_empty_ground_truth_is_pure_absence_term(self):
        preds = np.random.default_rng(3).uniform(size=(4, 15))
        d = np.full(4, 1e-7)
        loss, _, grad_d, assignment = matching_loss(preds, d, np.zeros((0, 15)), CFG)
        assert loss == pytest.approx(4 * 10.0 * -np.log1p(-1e-7), rel=1e-9)
        assert len(assignment) == 0

    def test_matches_brute_force_with_unmatched_term(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            preds = rng.uniform(0.05, 1.0, (3, 15))
            d = rng.uniform(0.1, 0.9, 3)
            gts = rng.uniform(0.05, 1.0, (2, 15))
            cost = np.array([
                [pairwise_cost(preds[j], d[j], gts[i], 1.0, CFG) for j in range(3)]
                for i in range(2)
            ])
            best, cols = brute_force_assignment(cost)
            unmatched = [j for j in range(3) if j not in cols]
            expected = best + sum(
                10.0 * -(np.log1p(-min(max(d[j], 1e-7), 1 - 1e-7))) for j in unmatched
            )
            loss, _, _, assignment = matching_loss(preds, d, gts, CFG)
            assert loss == pytest.approx(expected, rel=1e-9)
            assert list(assignment) == list(cols)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(5)
        preds = rng.uniform(0.1, 1.0, (3, 15))
        d = rng.uniform(0.2, 0.8, 3)
        gts = rng.uniform(0.1, 1.0, (2, 15))
        _, grad_p, grad_d, _ = matching_loss(preds, d, gts, CFG)
        h = 1e-7
        for j in range(3):
            dp = d.copy()
            dp[j] += h
            dm = d.copy()
            dm[j] -= h
            fd = (matching_loss(preds, dp, gts, CFG)[0]
                  - matching_loss(preds, dm, gts, CFG)[0]) / (2 * h)
            assert grad_d[j] == pytest.approx(fd, abs=1e-5)
        for j in range(3):
            for k in range(0, 15, 4):
                pp = preds.copy()
                pp[j, k] += h
                pm = preds.copy()
                pm[j, k] -= h
                fd = (matching_loss(pp, d, gts, CFG)[0]
                      - matching_loss(pm, d, gts, CFG)[0]) / (2 * h)
                assert grad_p[j, k] == pytest.approx(fd, abs=1e-5)

    def test_more_ground_truth_than_predictions_rejected(self):
        with pytest.raises(ConfigError):
            matching_loss(np.ones((2, 15)), np.ones(2), np.ones((3, 15)), CFG)


def listing_rank_loss(scr, order, margin):
    """Independent matrix transcription of the published ranking-loss listing."""
    scr = np.asarray(scr, dtype=np.float64)
    order = np.asarray(order, dtype=np.float64)
    n = len(scr)
    dif_pred = scr[:, None] - scr[None, :]
    dif_gt = order[:, None] - order[None, :]
    mask = dif_gt < 0
    hinge = np.maximum(0.0, (dif_pred - dif_gt * margin) * mask)
    return float(hinge.sum() / comb(n, 2))


class TestRankingLoss:
    def test_hand_values(self):
        assert ranking_loss([0.1, 0.3, 0.5], [1, 2, 3], 0.125)[0] == 0.0
        assert ranking_loss([0.5, 0.3], [1, 2], 0.125)[0] == pytest.approx(0.325)
        assert ranking_loss([0.4, 0.4], [1, 2], 0.125)[0] == pytest.approx(0.125)

    def test_fewer_than_two_strokes_cost_nothing(self):
        loss, grad = ranking_loss([0.7], [1], 0.125)
        assert loss == 0.0
        np.testing.assert_array_equal(grad, [0.0])
        assert ranking_loss([], [], 0.125)[0] == 0.0

    def test_matches_published_listing_transcription(self):
        rng = np.random.default_rng(6)
        for _ in range(300):
            n = int(rng.integers(2, 7))
            scr = rng.uniform(size=n)
            if rng.uniform() < 0.5:
                order = rng.permutation(n) + 1
            else:
                order = np.sort(rng.choice(50, n, replace=False)) + 1
                rng.shuffle(order)
            loss, _ = ranking_loss(scr, order, 0.125)
            assert loss == pytest.approx(listing_rank_loss(scr, order, 0.125), rel=1e-12)

    def test_zero_iff_every_margin_gap_is_respected(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = int(rng.integers(2, 6))
            order = rng.permutation(n) + 1
            scr = rng.uniform(size=n)
            loss, _ = ranking_loss(scr, order, 0.125)
            satisfied = all(
                scr[i] - scr[j] <= -(order[j] - order[i]) * 0.125
                for i in range(n) for j in range(n) if order[i] < order[j]
            )
            assert (loss == 0.0) == satisfied

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        checked = 0
        while checked < 25:
            n = int(rng.integers(2, 6))
            scr = rng.uniform(size=n)
            order = rng.permutation(n) + 1
            hinges = [scr[i] - scr[j] + (order[j] - order[i]) * 0.125
                      for i in range(n) for j in range(n) if order[i] < order[j]]
            if min(abs(h) for h in hinges) < 1e-4:
                continue
            _, grad = ranking_loss(scr, order, 0.125)
            h = 1e-6
            for k in range(n):
                sp = scr.copy()
                sp[k] += h
                sm = scr.copy()
                sm[k] -= h
                fd = (ranking_loss(sp, order, 0.125)[0]
                      - ranking_loss(sm, order, 0.125)[0]) / (2 * h)
                assert grad[k] == pytest.approx(fd, abs=1e-6)
            checked += 1

    def test_rejects_duplicate_orders_and_bad_shapes(self):
        with pytest.raises(ConfigError):
            ranking_loss([0.1, 0.2], [1, 1], 0.125)
        with pytest.raises(ConfigError):
            ranking_loss([0.1, 0.2], [1, 2, 3], 0.125)


class TestTotalLoss:
    def test_zero_components_give_zero(self):
        gt = np.random.default_rng(9).uniform(0.1, 1.0, (2, 15))
        scr = np.array([0.1, 0.9])
        loss, *_ = total_predictor_loss(gt, np.ones(2), scr, gt, np.array([1, 2]), CFG)
        assert loss < 1e-4

    def test_recomposes_from_the_two_terms(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            preds = rng.uniform(0.05, 1.0, (4, 15))
            d = rng.uniform(0.1, 0.9, 4)
            scr = rng.uniform(0.05, 0.95, 4)
            gts = rng.uniform(0.05, 1.0, (3, 15))
            order = rng.permutation(3) + 1
            loss, _, _, _, assignment = total_predictor_loss(preds, d, scr, gts, order, CFG)
            match = matching_loss(preds, d, gts, CFG)[0]
            rank = ranking_loss(scr[assignment], order, CFG.margin)[0]
            assert loss == pytest.approx(match + CFG.lambda_rank * rank, rel=1e-12)

    def test_weighted_sum_arithmetic(self):
        # a match term of 1 and a rank term of 0.2 under weight 5 total 2
        assert 1.0 + CFG.lambda_rank * 0.2 == 2.0

    def test_rank_gradient_lands_on_matched_slots_only(self):
        rng = np.random.default_rng(11)
        preds = rng.uniform(0.1, 1.0, (4, 15))
        d = rng.uniform(0.4, 0.6, 4)
        # the matched pair (slots 2 then 0) violates the margin, so it gets gradient
        scr = np.array([0.3, 0.2, 0.9, 0.4])
        gts = preds[[2, 0]].copy()
        loss, _, _, grad_scr, assignment = total_predictor_loss(
            preds, d, scr, gts, np.array([1, 2]), CFG)
        unmatched = [j for j in range(4) if j not in assignment]
        assert list(assignment) == [2, 0]
        np.testing.assert_array_equal(grad_scr[unmatched], 0.0)
        assert np.any(grad_scr[list(assignment)] != 0.0)


class TestPredictor:
    def test_untrained_outputs_respect_ranges(self):
        rng = np.random.default_rng(12)
        predictor = StrokePredictor.create(rng)
        canvas = Canvas.white(32)
        preds = predict_strokes(predictor, canvas, canvas)
        assert len(preds) == 8
        ranges = ParamRanges.for_canvas(32)
        for p in preds:
            assert ranges.contains(p.params)
            assert 0.0 < p.scr_r < 1.0
            assert 0.0 <= p.d <= 1.0
            assert 0.0 <= p.x_shift <= 1.0 and 0.0 <= p.y_shift <= 1.0

    def test_deterministic(self):
        predictor = small_predictor()
        _, target, _ = tiny_scene(0)
        first = predict_strokes(predictor, Canvas.white(8), target)
        second = predict_strokes(predictor, Canvas.white(8), target)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.params, b.params)
            assert a.scr_r == b.scr_r and a.d == b.d

    def test_patch_side_scales_spatial_dimensions(self):
        predictor = small_predictor()
        canvas = Canvas.white(8)
        at8 = predict_strokes(predictor, canvas, canvas)
        at16 = predict_strokes(predictor, canvas, canvas, patch_side=16)
        spatial = [0, 1, 2, 3, 4, 5, 6, 7, 12]
        for a, b in zip(at8, at16):
            np.testing.assert_allclose(b.params[spatial], 2.0 * a.params[spatial])
            np.testing.assert_allclose(b.params[8:12], a.params[8:12])
            assert b.scr_r == a.scr_r and b.d == a.d

    def test_size_and_channel_mismatches_rejected(self):
        predictor = small_predictor()
        with pytest.raises(ConfigError):
            predict_strokes(predictor, Canvas.white(16), Canvas.white(8))
        with pytest.raises(ConfigError):
            predict_strokes(predictor, Canvas.white(8), Canvas.white(16))
        with pytest.raises(ConfigError):
            predict_strokes(predictor, Canvas.white(8, channels=1), Canvas.white(8, channels=1))

    def test_create_rejects_bad_architectures(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ConfigError):
            StrokePredictor.create(rng, input_side=30)
        with pytest.raises(ConfigError):
            StrokePredictor.create(rng, canvas_channels=2)
        with pytest.raises(ConfigError):
            StrokePredictor.create(rng, max_strokes=0)

    def test_checkpoint_roundtrip(self, tmp_path):
        predictor = small_predictor()
        _, target, _ = tiny_scene(1)
        path = tmp_path / "predictor.ckpt"
        predictor.save(path)
        loaded = StrokePredictor.load(path)
        a = predict_strokes(predictor, Canvas.white(8), target)
        b = predict_strokes(loaded, Canvas.white(8), target)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.params, y.params)

    def test_load_rejects_other_checkpoints(self, tmp_path):
        denoiser = Denoiser.create(4, hidden=(8,), rng=np.random.default_rng(0))
        path = tmp_path / "other.ckpt"
        denoiser.save(path)
        with pytest.raises(ConfigError):
            StrokePredictor.load(path)

    def test_loss_gradient_matches_finite_differences(self):
        predictor = small_predictor()
        current, target, gts = tiny_scene(2)
        cfg = MatchConfig(max_strokes=3)
        loss, grad, _ = loss_and_grad(predictor, current, target, gts, cfg)
        assert np.isfinite(loss)
        rng = np.random.default_rng(13)
        h = 1e-6
        for i in rng.choice(predictor.params.size, 40, replace=False):
            orig = predictor.params[i]
            predictor.params[i] = orig + h
            up = loss_and_grad(predictor, current, target, gts, cfg)[0]
            predictor.params[i] = orig - h
            down = loss_and_grad(predictor, current, target, gts, cfg)[0]
            predictor.params[i] = orig
            fd = (up - down) / (2 * h)
            assert grad[i] == pytest.approx(fd, abs=max(1e-6, 1e-6 * abs(fd)))

    def test_absent_ground_truth_is_ignored(self):
        predictor = small_predictor()
        current, target, gts = tiny_scene(3)
        cfg = MatchConfig(max_strokes=3)
        ghost = GroundTruthStroke(params=gts[0].params, x_shift=0.1, y_shift=0.1,
                                  order_index=9, d=0.0)
        with_ghost = loss_and_grad(predictor, current, target, gts + [ghost], cfg)[0]
        without = loss_and_grad(predictor, current, target, gts, cfg)[0]
        assert with_ghost == without


class TestConditionProjector:
    def test_projection_is_the_block_matrix_product(self):
        rng = np.random.default_rng(14)
        proj = ConditionProjector.create(rng, embed_dim=6, context_dim=4)
        c_p = rng.normal(size=13)
        ctx = rng.normal(size=4)
        z = proj.project(c_p, ctx)
        expected = proj.weight[:, :13] @ c_p + proj.weight[:, 13:] @ ctx
        np.testing.assert_allclose(z, expected, atol=1e-12)
        assert z.shape == (6,)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(15)
        proj = ConditionProjector.create(rng, embed_dim=5, context_dim=2)
        c_p = rng.normal(size=(3, 13))
        ctx = rng.normal(size=(3, 2))
        batch = proj.project(c_p, ctx)
        assert batch.shape == (3, 5)
        for k in range(3):
            np.testing.assert_allclose(batch[k], proj.project(c_p[k], ctx[k]))

    def test_feeds_a_conditioned_denoiser(self):
        rng = np.random.default_rng(16)
        proj = ConditionProjector.create(rng, embed_dim=6, context_dim=4)
        denoiser = Denoiser.create(4, hidden=(8,), cond_dim=proj.embed_dim, rng=rng)
        z = proj.project(rng.normal(size=13), rng.normal(size=4))
        out = denoiser.predict(rng.normal(size=(2, 4)), 3, cond=z)
        assert out.shape == (2, 4)

    def test_dimension_errors(self):
        rng = np.random.default_rng(17)
        proj = ConditionProjector.create(rng, embed_dim=4, context_dim=3)
        with pytest.raises(ConfigError):
            proj.project(np.zeros(12), np.zeros(3))
        with pytest.raises(ConfigError):
            proj.project(np.zeros(13), np.zeros(2))
        with pytest.raises(ConfigError):
            ConditionProjector.create(rng, embed_dim=0, context_dim=3)
        with pytest.raises(ConfigError):
            ConditionProjector(np.zeros((4, 13)))

    def test_checkpoint_roundtrip(self, tmp_path):
        rng = np.random.default_rng(18)
        proj = ConditionProjector.create(rng, embed_dim=4, context_dim=3)
        path = tmp_path / "projector.ckpt"
        proj.save(path)
        loaded = ConditionProjector.load(path)
        np.testing.assert_array_equal(loaded.weight, proj.weight)


class TestRealizeAndOrder:
    def test_realize_translates_by_shift_and_origin(self):
        params = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0,
                           10.0, 20.0, 30.0, 0.5, 2.0])
        pred = StrokePrediction(params=params, x_shift=0.75, y_shift=0.25, scr_r=0.5, d=1.0)
        stroke = realize_stroke(pred, 16.0, origin=(100.0, 200.0))
        np.testing.assert_allclose(stroke.vector[0:8:2], params[0:8:2] + 0.25 * 16.0 + 100.0)
        np.testing.assert_allclose(stroke.vector[1:8:2], params[1:8:2] - 0.25 * 16.0 + 200.0)
        np.testing.assert_array_equal(stroke.vector[8:], params[8:])
        with pytest.raises(ConfigError):
            realize_stroke(pred, 0.0)

    def test_centered_shifts_keep_the_stroke_in_place(self):
        params = np.arange(13.0) + 1.0
        pred = StrokePrediction(params=params, x_shift=0.5, y_shift=0.5, scr_r=0.5, d=1.0)
        np.testing.assert_array_equal(realize_stroke(pred, 32.0).vector, params)

    def test_order_filters_then_sorts_stably(self):
        def pred(scr, d):
            return StrokePrediction(params=np.ones(13), x_shift=0.5, y_shift=0.5,
                                    scr_r=scr, d=d)
        placed = (place_predictions([pred(0.9, 1.0), pred(0.5, 1.0), pred(0.5, 0.2)], 8.0)
                  + place_predictions([pred(0.5, 0.8), pred(0.1, 1.0)], 8.0, patch=(0, 1)))
        ordered = order_strokes(placed)
        assert [(p.patch_col, p.slot) for p in ordered] == [(1, 1), (0, 1), (1, 0), (0, 0)]
        assert all(p.d >= 0.5 for p in ordered)


class TestCompositing:
    @staticmethod
    def thin_stroke(x0, y0, x1, y1, color, opacity=1.0, width=3.0):
        pts = np.array([[x0, y0], [x0 + (x1 - x0) / 3, y0 + (y1 - y0) / 3],
                        [x0 + 2 * (x1 - x0) / 3, y0 + 2 * (y1 - y0) / 3], [x1, y1]])
        return BezierStroke.from_parts(pts, np.asarray(color, dtype=np.float64),
                                       opacity, width)

    @classmethod
    def as_placed(cls, stroke, scr):
        centered = ground_truth_from_stroke(stroke.vector, 32.0, 1)
        pred = StrokePrediction(params=centered.params, x_shift=centered.x_shift,
                                y_shift=centered.y_shift, scr_r=scr, d=1.0)
        return place_predictions([pred], 32.0)[0]

    def test_disjoint_strokes_commute(self):
        a = self.thin_stroke(4.0, 4.0, 10.0, 4.0, [255, 0, 0])
        b = self.thin_stroke(4.0, 28.0, 10.0, 28.0, [0, 0, 255])
        base = Canvas.white(32)
        ab = composite(base, [self.as_placed(a, 0.2), self.as_placed(b, 0.8)])
        ba = composite(base, [self.as_placed(a, 0.8), self.as_placed(b, 0.2)])
        np.testing.assert_allclose(ab.pixels, ba.pixels, atol=1e-9)

    def test_overlapping_opaque_strokes_do_not_commute(self):
        a = self.thin_stroke(4.0, 16.0, 28.0, 16.0, [255, 0, 0], width=6.0)
        b = self.thin_stroke(16.0, 4.0, 16.0, 28.0, [0, 0, 255], width=6.0)
        base = Canvas.white(32)
        ab = composite(base, [self.as_placed(a, 0.2), self.as_placed(b, 0.8)])
        ba = composite(base, [self.as_placed(a, 0.8), self.as_placed(b, 0.2)])
        assert np.max(np.abs(ab.pixels - ba.pixels)) > 0.1

    def test_presence_threshold_drops_strokes(self):
        a = self.thin_stroke(4.0, 16.0, 28.0, 16.0, [0, 0, 0], width=6.0)
        placed = self.as_placed(a, 0.5)
        weak = place_predictions([StrokePrediction(
            params=placed.prediction.params, x_shift=placed.prediction.x_shift,
            y_shift=placed.prediction.y_shift, scr_r=0.5, d=0.4)], 32.0)
        out = composite(Canvas.white(32), weak)
        np.testing.assert_array_equal(out.pixels, Canvas.white(32).pixels)

    def test_ground_truth_order_reproduces_the_target(self):
        _, target, gts = tiny_scene(21, side=16, count=3)
        placed = []
        for i, gt in enumerate(gts):
            pred = StrokePrediction(params=gt.params, x_shift=gt.x_shift,
                                    y_shift=gt.y_shift, scr_r=0.1 + 0.2 * i, d=1.0)
            placed.append(place_predictions([pred], 16.0)[0])
        out = composite(Canvas.white(16), placed)
        np.testing.assert_allclose(out.pixels, target.pixels, atol=1e-12)

    def test_constant_texture_equals_flat_compositing(self):
        stroke = self.thin_stroke(6.0, 16.0, 26.0, 14.0, [200, 40, 90], width=5.0)
        texture = Canvas(np.full((8, 8, 3), stroke.color / 255.0))
        base = Canvas.white(32)
        textured = compose_textured(base, stroke, texture)
        flat = compose_over(base, stroke)
        np.testing.assert_array_equal(textured.pixels, flat.pixels)

    def test_black_texture_over_white_exposes_the_alpha(self):
        stroke = self.thin_stroke(6.0, 10.0, 26.0, 22.0, [255, 255, 255], width=4.0)
        texture = Canvas(np.zeros((5, 9, 3)))
        out = compose_textured(Canvas.white(32), stroke, texture)
        alpha = stroke_alpha(stroke, (32, 32))
        np.testing.assert_allclose(1.0 - out.pixels[:, :, 0], alpha, atol=1e-12)

    def test_texture_corners_land_on_the_coverage_box(self):
        stroke = self.thin_stroke(8.0, 8.0, 24.0, 24.0, [0, 0, 0], opacity=1.0,
                                  width=8.0)
        texture = Canvas(np.zeros((2, 2, 3)))
        texture.pixels[0, 0] = [1.0, 0.0, 0.0]
        texture.pixels[1, 1] = [0.0, 0.0, 1.0]
        out = compose_textured(Canvas.white(32), stroke, texture)
        alpha = stroke_alpha(stroke, (32, 32))
        core = alpha >= 0.5
        ys, xs = np.nonzero(core)
        top = out.pixels[ys.min(), xs[ys == ys.min()].min()]
        bottom = out.pixels[ys.max(), xs[ys == ys.max()].max()]
        # the warped color dominates wherever coverage is high
        a_top = alpha[ys.min(), xs[ys == ys.min()].min()]
        a_bot = alpha[ys.max(), xs[ys == ys.max()].max()]
        np.testing.assert_allclose(
            top, a_top * np.array([1.0, 0.0, 0.0]) + (1 - a_top), atol=1e-12)
        np.testing.assert_allclose(
            bottom, a_bot * np.array([0.0, 0.0, 1.0]) + (1 - a_bot), atol=1e-12)

    def test_texture_channels_must_match(self):
        stroke = self.thin_stroke(6.0, 16.0, 26.0, 16.0, [0, 0, 0])
        with pytest.raises(ConfigError):
            compose_textured(Canvas.white(32), stroke, Canvas(np.zeros((4, 4, 1))))


class TestResizeAndPadding:
    def test_block_mean_downscale(self):
        pixels = np.zeros((4, 4, 1))
        pixels[:2, :2, 0] = 1.0
        pixels[2:, 2:, 0] = np.array([[0.2, 0.4], [0.6, 0.8]])
        down = resize_canvas(Canvas(pixels), 2)
        np.testing.assert_allclose(down.pixels[:, :, 0], [[1.0, 0.0], [0.0, 0.5]])

    def test_nearest_upscale_then_downscale_roundtrips(self):
        rng = np.random.default_rng(19)
        canvas = Canvas(rng.uniform(size=(16, 16, 3)))
        up = resize_canvas(canvas, 32)
        assert up.height == 32
        np.testing.assert_allclose(resize_canvas(up, 16).pixels, canvas.pixels, atol=1e-12)

    def test_identity_copy(self):
        canvas = Canvas(np.full((8, 8, 1), 0.3))
        out = resize_canvas(canvas, 8)
        assert out.pixels is not canvas.pixels
        np.testing.assert_array_equal(out.pixels, canvas.pixels)

    def test_rejects_impossible_ratios(self):
        with pytest.raises(ConfigError):
            resize_canvas(Canvas.white(20), 32)
        with pytest.raises(ConfigError):
            resize_canvas(Canvas(np.ones((8, 4, 1))), 4)

    def test_padded_side_hand_values(self):
        assert padded_side(64, 64, 2, 32) == 64
        assert padded_side(48, 48, 2, 32) == 64
        assert padded_side(295, 295, 2, 32) == 320
        assert padded_side(16, 16, 1, 32) == 16
        assert padded_side(20, 20, 1, 32) == 32

    def test_padded_side_always_resizable_at_every_layer(self):
        rng = np.random.default_rng(20)
        for _ in range(100):
            h, w = rng.integers(4, 200, 2)
            layers = int(rng.integers(1, 4))
            side = padded_side(int(h), int(w), layers, 32)
            assert side >= max(h, w)
            for k in range(layers):
                assert side % 2**k == 0
                patch = side // 2**k
                assert patch % 32 == 0 or 32 % patch == 0


class TestLayeredPaint:
    def test_single_layer_equals_one_predict_and_composite(self):
        predictor = StrokePredictor.create(np.random.default_rng(21))
        _, target, _ = make_scene(np.random.default_rng(22), 32, min_strokes=2, max_strokes=3)
        result = layered_paint(target, predictor, 1)
        preds = predict_strokes(predictor, Canvas.white(32), target)
        manual = composite(Canvas.white(32), place_predictions(preds, 32.0))
        np.testing.assert_array_equal(result.final.pixels, manual.pixels)
        assert len(result.intermediates) == 1
        assert result.padded_to == 32

    def test_two_layers_stay_within_the_stroke_budget(self):
        predictor = StrokePredictor.create(np.random.default_rng(23))
        rng = np.random.default_rng(24)
        _, target, _ = make_scene(rng, 32, min_strokes=2, max_strokes=4)
        big = Canvas(np.repeat(np.repeat(target.pixels, 2, axis=0), 2, axis=1))
        result = layered_paint(big, predictor, 2)
        assert len(result.strokes) <= 8 * (1 + 4)
        assert len(result.intermediates) == 2
        assert len(result.layer_mse) == 2
        assert result.final.height == 64
        layers = [s.layer for s in result.strokes]
        assert layers == sorted(layers)

    def test_padding_crops_back_to_the_target_shape(self):
        predictor = StrokePredictor.create(np.random.default_rng(25))
        target = Canvas(np.random.default_rng(26).uniform(size=(48, 40, 3)))
        result = layered_paint(target, predictor, 2)
        assert result.padded_to == 64
        assert result.final.height == 48 and result.final.width == 40

    def test_bad_inputs_rejected(self):
        predictor = StrokePredictor.create(np.random.default_rng(27))
        with pytest.raises(ConfigError):
            layered_paint(Canvas.white(32), predictor, 0)
        with pytest.raises(ConfigError):
            layered_paint(Canvas.white(32, channels=1), predictor, 1)


class TestSceneGeneration:
    def test_straight_stroke_centroid_is_the_midpoint(self):
        stroke = TestCompositing.thin_stroke(2.0, 4.0, 10.0, 12.0, [0, 0, 0])
        np.testing.assert_allclose(stroke_centroid(stroke.vector), [6.0, 8.0], atol=1e-12)

    def test_ground_truth_roundtrips_exactly(self):
        rng = np.random.default_rng(28)
        ranges = ParamRanges.for_canvas(32)
        for index in range(1, 21):
            stroke = generate_random_stroke(rng, ranges)
            gt = ground_truth_from_stroke(stroke.vector, 32.0, index)
            assert 0.0 <= gt.x_shift <= 1.0 and 0.0 <= gt.y_shift <= 1.0
            pred = StrokePrediction(params=gt.params, x_shift=gt.x_shift,
                                    y_shift=gt.y_shift, scr_r=0.5, d=1.0)
            np.testing.assert_allclose(realize_stroke(pred, 32.0).vector,
                                       stroke.vector, atol=1e-10)

    def test_clipped_shift_still_roundtrips(self):
        vector = np.array([40.0, 4.0, 44.0, 5.0, 48.0, 6.0, 52.0, 7.0,
                           0.0, 0.0, 0.0, 1.0, 2.0])
        gt = ground_truth_from_stroke(vector, 32.0, 1)
        assert gt.x_shift == 1.0
        pred = StrokePrediction(params=gt.params, x_shift=gt.x_shift,
                                y_shift=gt.y_shift, scr_r=0.5, d=1.0)
        np.testing.assert_allclose(realize_stroke(pred, 32.0).vector, vector, atol=1e-10)

    def test_scene_orders_by_centroid_and_rebuilds_the_target(self):
        current, target, gts = make_scene(np.random.default_rng(29), 32,
                                          min_strokes=3, max_strokes=5)
        np.testing.assert_array_equal(current.pixels, Canvas.white(32).pixels)
        assert [g.order_index for g in gts] == list(range(1, len(gts) + 1))
        keys = []
        rebuilt = Canvas.white(32)
        for gt in gts:
            pred = StrokePrediction(params=gt.params, x_shift=gt.x_shift,
                                    y_shift=gt.y_shift, scr_r=0.5, d=1.0)
            stroke = realize_stroke(pred, 32.0)
            keys.append(float(sum(stroke_centroid(stroke.vector))))
            rebuilt = compose_over(rebuilt, stroke)
        assert keys == sorted(keys)
        np.testing.assert_allclose(rebuilt.pixels, target.pixels, atol=1e-12)

    def test_scene_is_deterministic_per_seed(self):
        a = make_scene(np.random.default_rng(30), 32, min_strokes=2, max_strokes=4)
        b = make_scene(np.random.default_rng(30), 32, min_strokes=2, max_strokes=4)
        np.testing.assert_array_equal(a[1].pixels, b[1].pixels)
        assert len(a[2]) == len(b[2])

    def test_bad_bounds_rejected(self):
        with pytest.raises(ConfigError):
            make_scene(np.random.default_rng(0), 32, min_strokes=3, max_strokes=2)
        with pytest.raises(ConfigError):
            make_scene(np.random.default_rng(0), 32, min_strokes=0, max_strokes=2)


class TestRankError:
    def test_hand_values(self):
        assert pairwise_rank_error([0.1, 0.2, 0.3], [1, 2, 3]) == 0.0
        assert pairwise_rank_error([0.3, 0.2, 0.1], [1, 2, 3]) == 1.0
        assert pairwise_rank_error([0.5, 0.5], [1, 2]) == 0.5
        assert pairwise_rank_error([0.2, 0.1, 0.3], [1, 2, 3]) == pytest.approx(1.0 / 3.0)

    def test_order_values_need_not_be_dense(self):
        assert pairwise_rank_error([0.1, 0.9], [3, 11]) == 0.0
        assert pairwise_rank_error([0.9, 0.1], [3, 11]) == 1.0

    def test_needs_two_strokes(self):
        with pytest.raises(ConfigError):
            pairwise_rank_error([0.5], [1])


class TestTraining:
    def test_fixed_scene_loss_halves(self):
        scene = tiny_scene(31, side=8, count=2)
        cfg = MatchConfig(max_strokes=3)
        rng = np.random.default_rng(32)
        predictor = small_predictor(seed=33)
        result = train_predictor(lambda r: scene, cfg, epochs=30, rng=rng,
                                 predictor=predictor, scenes_per_epoch=2,
                                 holdout_scenes=1, lr=3e-3)
        assert len(result.loss_history) == 30
        assert len(result.rank_error_history) == 30
        assert result.loss_history[-1] <= 0.5 * result.loss_history[0]
        assert all(0.0 <= e <= 1.0 for e in result.rank_error_history)

    def test_diverged_parameters_abort(self):
        predictor = small_predictor(seed=34)
        predictor.params[:] = np.nan
        scene = tiny_scene(35, side=8, count=0)
        cfg = MatchConfig(max_strokes=3)
        with pytest.raises(NumericalError):
            train_predictor(lambda r: scene, cfg, epochs=1,
                            rng=np.random.default_rng(0), predictor=predictor,
                            scenes_per_epoch=1, holdout_scenes=0)

    def test_bad_budgets_rejected(self):
        scene = tiny_scene(36, side=8, count=1)
        with pytest.raises(ConfigError):
            train_predictor(lambda r: scene, CFG, epochs=0, rng=np.random.default_rng(0))
        with pytest.raises(ConfigError):
            train_predictor(lambda r: scene, CFG, epochs=1, rng=np.random.default_rng(0),
                            scenes_per_epoch=0)

    def test_creates_a_predictor_matched_to_the_scenes(self):
        source = scene_source(32, min_strokes=1, max_strokes=2)
        result = train_predictor(source, MatchConfig(max_strokes=4), epochs=1,
                                 rng=np.random.default_rng(37), scenes_per_epoch=1,
                                 holdout_scenes=0)
        assert result.predictor.arch["input_side"] == 32
        assert result.predictor.arch["max_strokes"] == 4

    def test_explicit_holdout_bypasses_the_generator(self):
        train = tiny_scene(38, side=8, count=1)
        held = tiny_scene(39, side=8, count=3)
        calls = []

        def source(r):
            calls.append(1)
            return train

        cfg = MatchConfig(max_strokes=3)
        result = train_predictor(source, cfg, epochs=2, rng=np.random.default_rng(40),
                                 predictor=small_predictor(seed=41),
                                 scenes_per_epoch=2, holdout_scenes=5, holdout=[held])
        # only the training draws hit the generator
        assert len(calls) == 4
        _, _, assignment = loss_and_grad(result.predictor, held[0], held[1],
                                         held[2], cfg)
        scr = np.array([p.scr_r for p in
                        predict_strokes(result.predictor, held[0], held[1])])
        order = np.array([g.order_index for g in held[2]])
        expected = pairwise_rank_error(scr[assignment], order)
        assert result.rank_error_history[-1] == pytest.approx(expected)
