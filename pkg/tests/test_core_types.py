"""Tests for shared numeric types"""

import numpy as np
import pytest

from src.core_types import (
    DataError,
    NumericError,
    YodaError,
    as_attention,
    as_image,
    as_mask,
    ensure_finite,
    to_grayscale,
)


class TestAsImage:
    def test_promotes_2d_to_single_channel(self):
        """Should add a channel axis to a 2-D array"""
        image = as_image(np.zeros((4, 5)))

        assert image.shape == (4, 5, 1)
        assert image.dtype == np.float64

    def test_rejects_two_channels(self):
        """Should only accept 1 or 3 channels"""
        with pytest.raises(ValueError, match="channels"):
            as_image(np.zeros((4, 4, 2)))

    def test_rejects_empty(self):
        """Should reject zero-sized dimensions"""
        with pytest.raises(ValueError):
            as_image(np.zeros((0, 4, 3)))

    def test_rejects_nan(self):
        """Should raise NumericError on non-finite pixels"""
        image = np.zeros((2, 2, 3))
        image[0, 0, 0] = np.nan

        with pytest.raises(NumericError):
            as_image(image)


class TestAsAttention:
    def test_accepts_unit_interval(self):
        """Should accept the bounds 0 and 1"""
        attention = as_attention(np.array([[0.0, 1.0], [0.5, 0.25]]))

        assert attention.shape == (2, 2)

    @pytest.mark.parametrize("bad", [-0.01, 1.01, np.nan])
    def test_rejects_out_of_range(self, bad):
        """Should reject values outside [0, 1]"""
        with pytest.raises(ValueError):
            as_attention(np.array([[0.5, bad]]))

    def test_rejects_3d(self):
        """Should require a 2-D map"""
        with pytest.raises(ValueError):
            as_attention(np.zeros((2, 2, 1)))


class TestAsMask:
    def test_converts_integers(self):
        """Should turn 0/1 integers into booleans"""
        mask = as_mask(np.array([[0, 1], [1, 0]]))

        assert mask.dtype == np.bool_
        assert mask.tolist() == [[False, True], [True, False]]

    def test_rejects_other_values(self):
        """Should reject entries other than 0 and 1"""
        with pytest.raises(ValueError):
            as_mask(np.array([[0, 2]]))


class TestHelpers:
    def test_error_hierarchy(self):
        """Should derive every error kind from YodaError"""
        assert issubclass(DataError, YodaError)
        assert issubclass(NumericError, YodaError)

    def test_ensure_finite_reports_count(self):
        """Should count the bad values in the message"""
        with pytest.raises(NumericError, match="2 non-finite"):
            ensure_finite(np.array([np.inf, 1.0, np.nan]), "loss")

    def test_grayscale_of_gray_image(self):
        """Should return the single channel unchanged"""
        image = np.random.default_rng(0).random((3, 3, 1))

        np.testing.assert_array_equal(to_grayscale(image), image[:, :, 0])

    def test_grayscale_weights_sum_to_one(self):
        """Should map a constant RGB image to the same constant"""
        gray = to_grayscale(np.full((2, 2, 3), 0.4))

        np.testing.assert_allclose(gray, 0.4, rtol=1e-12)
