"""Tests for bicubic resampling"""

import math

import numpy as np
import pytest

from src.resample import bicubic_resize, cubic_kernel, resize_weights


def catmull_rom(x):
    x = abs(x)
    if x <= 1.0:
        return 1.5 * x**3 - 2.5 * x**2 + 1.0
    if x < 2.0:
        return -0.5 * x**3 + 2.5 * x**2 - 4.0 * x + 2.0
    return 0.0


def reference_upsample(plane, out_h, out_w):
    """Pixel-by-pixel 4x4 Catmull-Rom interpolation with clamped borders"""
    in_h, in_w = plane.shape
    out = np.zeros((out_h, out_w))
    for i in range(out_h):
        sy = (i + 0.5) * in_h / out_h - 0.5
        for j in range(out_w):
            sx = (j + 0.5) * in_w / out_w - 0.5
            total = 0.0
            norm = 0.0
            for m in range(math.floor(sy) - 1, math.floor(sy) + 3):
                for n in range(math.floor(sx) - 1, math.floor(sx) + 3):
                    weight = catmull_rom(sy - m) * catmull_rom(sx - n)
                    total += weight * plane[min(max(m, 0), in_h - 1), min(max(n, 0), in_w - 1)]
                    norm += weight
            out[i, j] = total / norm
    return out


class TestCubicKernel:
    def test_interpolating(self):
        """Should be 1 at zero and 0 at the other integers"""
        np.testing.assert_allclose(cubic_kernel(np.array([0.0, 1.0, 2.0, 3.0])), [1, 0, 0, 0])

    def test_matches_catmull_rom(self):
        """Should agree with the piecewise Catmull-Rom polynomial"""
        xs = np.linspace(-2.5, 2.5, 41)

        np.testing.assert_allclose(cubic_kernel(xs), [catmull_rom(x) for x in xs], atol=1e-15)


class TestResizeWeights:
    @pytest.mark.parametrize(("n_in", "n_out"), [(4, 8), (8, 4), (5, 13), (32, 8)])
    def test_rows_sum_to_one(self, n_in, n_out):
        """Should normalize every output row"""
        np.testing.assert_allclose(resize_weights(n_in, n_out).sum(axis=1), 1.0, rtol=1e-12)

    def test_downscale_widens_support(self):
        """Should stretch the kernel over more than four taps when shrinking"""
        weights = resize_weights(32, 8)

        assert np.count_nonzero(weights[4]) > 4


class TestBicubicResize:
    def test_identity(self, ramp_image):
        """Should return an equal copy when the size is unchanged"""
        resized = bicubic_resize(ramp_image, 8, 8)

        np.testing.assert_array_equal(resized, ramp_image)
        assert resized is not ramp_image

    @pytest.mark.parametrize(("height", "width"), [(16, 16), (3, 5), (8, 24)])
    def test_constant_stays_constant(self, height, width):
        """Should map a constant image to the same constant"""
        resized = bicubic_resize(np.full((8, 8, 3), 0.37), height, width)

        np.testing.assert_allclose(resized, 0.37, atol=1e-12)

    def test_matches_scalar_reference(self):
        """Should agree with a per-pixel reference on a 4x4 ramp upsampled to 8x8"""
        plane = np.add.outer(np.arange(4.0), 2.0 * np.arange(4.0)) / 9.0

        resized = bicubic_resize(plane, 8, 8)

        np.testing.assert_allclose(resized[:, :, 0], reference_upsample(plane, 8, 8), atol=1e-6)

    def test_matches_reference_on_random_image(self):
        """Should agree with the reference for a non-integer factor"""
        plane = np.random.default_rng(4).random((5, 6))

        resized = bicubic_resize(plane, 11, 9)

        np.testing.assert_allclose(resized[:, :, 0], reference_upsample(plane, 11, 9), atol=1e-6)

    def test_preserves_channels(self, ramp_image):
        """Should resample every channel independently"""
        resized = bicubic_resize(ramp_image, 16, 16)

        assert resized.shape == (16, 16, 3)
        np.testing.assert_allclose(
            resized[:, :, 1], bicubic_resize(ramp_image[:, :, 1], 16, 16)[:, :, 0]
        )

    @pytest.mark.parametrize(("height", "width"), [(0, 4), (4, 0)])
    def test_rejects_empty_target(self, ramp_image, height, width):
        """Should reject a target dimension below one"""
        with pytest.raises(ValueError):
            bicubic_resize(ramp_image, height, width)
