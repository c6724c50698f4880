"""Separable Catmull-Rom bicubic resampling with anti-aliased downscaling."""

import math

import numpy as np

from src.core_types import ImageTensor, as_image

CATMULL_ROM_A = -0.5


def cubic_kernel(x: np.ndarray, a: float = CATMULL_ROM_A) -> np.ndarray:
    """Keys cubic convolution kernel; a = -0.5 gives Catmull-Rom."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    x2 = x * x
    x3 = x2 * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def resize_weights(n_in: int, n_out: int) -> np.ndarray:
    """Build the (n_out, n_in) resampling matrix for one axis.

    Output sample i sits at input coordinate (i + 0.5) * n_in / n_out - 0.5.
    When shrinking, the kernel is stretched by n_in / n_out so it acts as a
    low-pass filter. Taps outside the input are clamped to the edge samples,
    and every row is normalized to sum to one.
    """
    scale = n_out / n_in
    stretch = min(scale, 1.0)
    support = 2.0 / stretch
    weights = np.zeros((n_out, n_in))
    for i in range(n_out):
        center = (i + 0.5) / scale - 0.5
        taps = np.arange(math.ceil(center - support), math.floor(center + support) + 1)
        kernel = cubic_kernel((taps - center) * stretch)
        np.add.at(weights[i], np.clip(taps, 0, n_in - 1), kernel)
        weights[i] /= weights[i].sum()
    return weights


def bicubic_resize(image: ImageTensor, height: int, width: int) -> ImageTensor:
    """Resize an (H, W, C) image to (height, width, C).

    Raises:
        ValueError: If a target dimension is smaller than one
    """
    if height < 1 or width < 1:
        raise ValueError(f"Target dimensions must be positive, got {height}x{width}")
    image = as_image(image)
    in_h, in_w, _ = image.shape
    if (in_h, in_w) == (height, width):
        return image.copy()
    rows = resize_weights(in_h, height)
    cols = resize_weights(in_w, width)
    return np.einsum("ij,jkc,lk->ilc", rows, image, cols)
