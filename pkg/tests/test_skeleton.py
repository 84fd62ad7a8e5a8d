import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prnn.config import HIP_INDEX
from prnn.skeleton import (denormalize_keypoints, normalize_keypoints,
                           normalize_skeleton, sg_smooth)
from prnn.tensor import ValidationError


class TestNormalizeSkeleton:
    def test_hip_to_origin(self):
        skel = np.zeros((1, 6, 3))
        skel[0, HIP_INDEX] = [5.0, 5.0, 5.0]
        skel[0, 0] = [5.0, 9.0, 5.0]  # head
        out = normalize_skeleton(skel)
        assert np.array_equal(out[0, HIP_INDEX], [0.0, 0.0, 0.0])
        assert np.array_equal(out[0, 0], [0.0, 4.0, 0.0])

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        skel = rng.normal(size=(4, 6, 3))
        once = normalize_skeleton(skel)
        assert np.allclose(normalize_skeleton(once), once, atol=1e-15)

    @given(st.floats(-100, 100), st.floats(-100, 100), st.floats(-100, 100))
    @settings(max_examples=30, deadline=None)
    def test_translation_invariance(self, dx, dy, dz):
        rng = np.random.default_rng(1)
        skel = rng.normal(size=(3, 6, 3))
        shifted = skel + np.array([dx, dy, dz])
        assert np.allclose(normalize_skeleton(shifted), normalize_skeleton(skel),
                           atol=1e-9)


class TestSavitzkyGolay:
    def test_linear_series_unchanged(self):
        series = np.arange(7, dtype=float)
        assert np.allclose(sg_smooth(series), series, atol=1e-10)

    def test_constant_unchanged(self):
        series = np.full(9, 3.5)
        assert np.allclose(sg_smooth(series), series, atol=1e-12)

    def test_center_coefficients(self):
        # window=5 order=2 center weights are [-3,12,17,12,-3]/35
        spike = np.zeros(9)
        spike[4] = 1.0
        out = sg_smooth(spike)
        assert out[4] == pytest.approx(17 / 35, abs=1e-12)
        assert out[3] == pytest.approx(12 / 35, abs=1e-12)
        assert out[2] == pytest.approx(-3 / 35, abs=1e-12)

    def test_center_weights_match_least_squares_oracle(self):
        # fit a degree-2 polynomial over positions -2..2 and evaluate at 0
        pos = np.arange(-2, 3, dtype=float)
        A = np.vander(pos, 3, increasing=True)
        coeffs = np.linalg.pinv(A)[0]  # weights producing the constant term
        spike = np.zeros(11)
        spike[5] = 1.0
        out = sg_smooth(spike)
        assert np.allclose(out[3:8], coeffs[::-1], atol=1e-12)

    def test_short_series_unchanged(self):
        series = np.array([1.0, 5.0, 2.0])
        assert np.array_equal(sg_smooth(series, window=5), series)

    def test_invalid_window(self):
        with pytest.raises(ValidationError):
            sg_smooth(np.zeros(10), window=4)
        with pytest.raises(ValidationError):
            sg_smooth(np.zeros(10), window=5, order=5)


class TestNormalizeKeypoints:
    def test_center_maps_to_zero(self):
        out = normalize_keypoints(np.array([[16.0, 16.0]]), (16, 16), 32, 32)
        assert np.array_equal(out, [[0.0, 0.0]])

    def test_right_edge_maps_to_one(self):
        out = normalize_keypoints(np.array([[32.0, 16.0]]), (16, 16), 32, 32)
        assert out[0, 0] == 1.0

    def test_round_trip_interior(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(4, 28, size=(5, 2))
        norm = normalize_keypoints(pts, (16, 16), 32, 32)
        back = denormalize_keypoints(norm, (16, 16), 32, 32)
        assert np.allclose(back, pts, atol=1e-12)

    def test_degenerate_region(self):
        with pytest.raises(ValidationError):
            normalize_keypoints(np.zeros((1, 2)), (0, 0), 0, 32)
