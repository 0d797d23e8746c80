import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wildreid.core import BoundingBox, FrameRecord, FrameStatus
from wildreid.motion import (FlowError, FlowParams, blur_filter, farneback_flow,
                             motion_scores, polynomial_expansion, to_gray)

from conftest import smooth_texture
from oracles import expansion_oracle


def interior(arr, radius):
    return arr[radius:-radius, radius:-radius]


class TestPolynomialExpansion:
    def test_constant_image(self):
        img = np.full((20, 20), 0.5)
        a, b, c = polynomial_expansion(img, 5, 1.1)
        assert np.allclose(interior(a, 2), 0.0, atol=1e-10)
        assert np.allclose(interior(b, 2), 0.0, atol=1e-10)
        assert np.allclose(interior(c, 2), 0.5, atol=1e-10)

    def test_linear_ramp(self):
        x = np.arange(24, dtype=float)
        img = np.tile(0.01 * x, (24, 1))
        a, b, c = polynomial_expansion(img, 5, 1.1)
        assert np.allclose(interior(b[..., 0], 2), 0.01, atol=1e-10)
        assert np.allclose(interior(b[..., 1], 2), 0.0, atol=1e-10)
        assert np.allclose(interior(a, 2), 0.0, atol=1e-10)

    def test_matches_normal_equations_oracle(self, rng):
        img = rng.random((32, 32))
        a, b, c = polynomial_expansion(img, 5, 1.1)
        oa, ob, oc = expansion_oracle(img, 5, 1.1)
        r = 2
        assert np.allclose(interior(a, r), interior(oa, r), atol=1e-6)
        assert np.allclose(interior(b, r), interior(ob, r), atol=1e-6)
        assert np.allclose(interior(c, r), interior(oc, r), atol=1e-6)

    def test_image_smaller_than_window(self):
        with pytest.raises(FlowError, match="smaller than poly_n"):
            polynomial_expansion(np.zeros((4, 40)), 5, 1.1)


def central_region(field, frac_margin=0.125):
    h, w = field.shape
    my, mx = int(round(h * frac_margin)), int(round(w * frac_margin))
    return field[my:h - my, mx:w - mx]


class TestFarnebackFlow:
    def test_zero_motion(self, rng):
        img = smooth_texture(rng)
        flow = farneback_flow(img, img)
        assert flow.magnitude().mean() < 1e-3

    @pytest.mark.parametrize("shift", [(2, 0), (-1, 3)])
    def test_known_translation(self, rng, shift):
        sx, sy = shift
        img = smooth_texture(rng)
        nxt = np.roll(img, (sy, sx), axis=(0, 1))
        flow = farneback_flow(img, nxt)
        err = np.hypot(central_region(flow.dx) - sx, central_region(flow.dy) - sy)
        assert err.mean() < 0.5

    def test_swap_negates_translation_flow(self, rng):
        img = smooth_texture(rng)
        for shift in [(1, 0), (0, -2), (3, 1)]:
            nxt = np.roll(img, (shift[1], shift[0]), axis=(0, 1))
            fwd = farneback_flow(img, nxt)
            bwd = farneback_flow(nxt, img)
            resid = np.hypot(central_region(fwd.dx) + central_region(bwd.dx),
                             central_region(fwd.dy) + central_region(bwd.dy))
            assert resid.mean() < 0.5

    def test_dimension_mismatch(self):
        with pytest.raises(FlowError, match="mismatch"):
            farneback_flow(np.zeros((32, 32)), np.zeros((32, 31)))

    def test_image_too_small(self):
        with pytest.raises(FlowError, match="window_size"):
            farneback_flow(np.zeros((8, 8)), np.zeros((8, 8)))


class TestMotionScores:
    def test_static_video(self, rng):
        img = smooth_texture(rng, 64, 64)
        scores = motion_scores([img] * 5)
        assert scores[0] == 0.0
        assert all(s < 1e-3 for s in scores)

    def test_shifted_middle_frame(self, rng):
        img = smooth_texture(rng)
        shifted = np.roll(img, (0, 4), axis=(0, 1))
        scores = motion_scores([img, shifted, shifted])
        assert scores[0] == 0.0
        assert abs(scores[1] - 4.0) < 0.5
        assert scores[2] < 0.5

    def test_single_frame_video(self, rng):
        assert motion_scores([smooth_texture(rng, 64, 64)]) == [0.0]

    def test_empty_errors(self):
        with pytest.raises(FlowError):
            motion_scores([])

    def test_error_tagged_with_frame_index(self, rng):
        frames = [smooth_texture(rng, 64, 64), np.zeros((32, 32))]
        with pytest.raises(FlowError, match="frame 1"):
            motion_scores(frames)

    def test_larger_shift_scores_higher(self, rng):
        img = smooth_texture(rng)
        small = motion_scores([img, np.roll(img, 1, axis=1)])[1]
        large = motion_scores([img, np.roll(img, 2, axis=1)])[1]
        assert large > small


class TestFlowParams:
    @pytest.mark.parametrize("kwargs", [
        {"pyramid_scale": 0.0}, {"pyramid_scale": 1.0}, {"levels": 0},
        {"window_size": 14}, {"window_size": -1}, {"iterations": 0},
        {"poly_n": 4}, {"poly_n": 1}, {"poly_sigma": 0.0},
    ])
    def test_bounds_checked_at_construction(self, kwargs):
        with pytest.raises(ValueError):
            FlowParams(**kwargs)

    def test_defaults_valid(self):
        p = FlowParams()
        assert (p.pyramid_scale, p.levels, p.window_size) == (0.5, 3, 15)
        assert (p.iterations, p.poly_n, p.poly_sigma) == (3, 5, 1.1)


class TestToGray:
    def test_luminance_weights(self):
        rgb = np.zeros((2, 2, 3), dtype=np.uint8)
        rgb[..., 0] = 255
        assert np.allclose(to_gray(rgb), 0.299)
        rgb = np.zeros((2, 2, 3), dtype=np.uint8)
        rgb[..., 1] = 255
        assert np.allclose(to_gray(rgb), 0.587)

    def test_grayscale_passthrough_scaled(self):
        img = np.full((3, 3), 128, dtype=np.uint8)
        assert np.allclose(to_gray(img), 128 / 255)


def detected(video_id, scores):
    box = BoundingBox(0.5, 0.5, 0.5, 0.5, 0.9)
    return [FrameRecord(video_id, i, FrameStatus.DETECTED, box, s)
            for i, s in enumerate(scores)]


class TestBlurFilter:
    def test_paper_counts_151(self):
        frames = detected("v1", [float(i % 37) for i in range(151)])
        retained, dropped = blur_filter(frames, 0.2)
        assert len(dropped) == 31
        assert len(retained) == 120

    def test_ten_frames(self):
        retained, dropped = blur_filter(detected("v1", list(range(10))), 0.2)
        assert (len(dropped), len(retained)) == (2, 8)
        assert {r.frame_index for r in dropped} == {8, 9}

    def test_all_equal_scores_tie_rule(self):
        retained, dropped = blur_filter(detected("v1", [1.0] * 5), 0.2)
        assert [r.frame_index for r in dropped] == [4]
        assert [r.frame_index for r in retained] == [0, 1, 2, 3]

    def test_empty_input(self):
        assert blur_filter([], 0.2) == ([], [])

    def test_zero_fraction_keeps_everything(self):
        retained, dropped = blur_filter(detected("v1", [3.0, 1.0, 2.0]), 0.0)
        assert dropped == []
        assert [r.frame_index for r in retained] == [0, 1, 2]

    def test_fraction_one_rejected(self):
        with pytest.raises(ValueError, match=r"\[0,1\)"):
            blur_filter(detected("v1", [1.0]), 1.0)

    def test_statuses_assigned(self):
        retained, dropped = blur_filter(detected("v1", [0.0, 5.0]), 0.2)
        assert all(r.status is FrameStatus.CANDIDATE for r in retained)
        assert all(r.status is FrameStatus.DISCARDED_HIGH_MOTION for r in dropped)

    def test_retained_max_not_above_dropped_min(self, rng):
        scores = rng.random(40).tolist()
        retained, dropped = blur_filter(detected("v1", scores), 0.2)
        assert max(r.motion_score for r in retained) <= min(r.motion_score for r in dropped)

    def test_mixed_videos_rejected(self):
        frames = detected("v1", [1.0]) + detected("v2", [1.0])
        with pytest.raises(ValueError, match="one video"):
            blur_filter(frames, 0.2)

    def test_deterministic(self, rng):
        scores = rng.random(33).tolist()
        first = blur_filter(detected("v1", scores), 0.2)
        second = blur_filter(detected("v1", scores), 0.2)
        assert first == second

    @given(n=st.integers(1, 500))
    @settings(max_examples=120, deadline=None)
    def test_retained_count_matches_exact_ceil(self, n):
        # Exact-arithmetic oracle: ceil(n/5) for the default 20% fraction.
        retained, dropped = blur_filter(detected("v1", [float(i) for i in range(n)]), 0.2)
        assert len(dropped) == (n + 4) // 5
        assert len(retained) == n - (n + 4) // 5
