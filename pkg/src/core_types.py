"""Shared numeric types: images, attention maps, binary masks, and error kinds.

Images are float64 arrays of shape (H, W, C) with C in {1, 3}. Attention maps
are float64 arrays of shape (H, W) with values in [0, 1]. Binary masks are bool
arrays of shape (H, W). The aliases below name those roles; the ``as_*``
helpers validate and normalize raw arrays into them.
"""

import numpy as np
from numpy.typing import NDArray

ImageTensor = NDArray[np.float64]
AttentionMap = NDArray[np.float64]
BinaryMask = NDArray[np.bool_]


class YodaError(Exception):
    """Base exception for attention-guided diffusion errors"""


class DataError(YodaError):
    """Raised for unusable input data: files, directories, map payloads"""


class NumericError(YodaError):
    """Raised when a computation produces NaN or Inf"""


def ensure_finite(array: np.ndarray, what: str) -> np.ndarray:
    """Raise NumericError if ``array`` holds NaN or Inf.

    Args:
        array: Values to check
        what: Name used in the error message

    Returns:
        The same array, for chaining
    """
    if not np.all(np.isfinite(array)):
        bad = int(np.count_nonzero(~np.isfinite(array)))
        raise NumericError(f"{what} contains {bad} non-finite values")
    return array


def as_image(data: np.ndarray) -> ImageTensor:
    """Validate and convert ``data`` into an (H, W, C) float64 image.

    A 2-D array is promoted to a single-channel image.

    Raises:
        ValueError: If the shape is not (H, W) or (H, W, C) with C in {1, 3}
        NumericError: If any value is non-finite
    """
    image = np.asarray(data, dtype=np.float64)
    if image.ndim == 2:
        image = image[:, :, np.newaxis]
    if image.ndim != 3:
        raise ValueError(f"Image must have shape (H, W, C), got {image.shape}")
    height, width, channels = image.shape
    if height < 1 or width < 1:
        raise ValueError(f"Image dimensions must be positive, got {height}x{width}")
    if channels not in (1, 3):
        raise ValueError(f"Image must have 1 or 3 channels, got {channels}")
    return ensure_finite(image, "image")


def as_attention(data: np.ndarray) -> AttentionMap:
    """Validate and convert ``data`` into an (H, W) attention map in [0, 1].

    Raises:
        ValueError: If the map is not 2-D, empty, or has values outside [0, 1]
    """
    attention = np.asarray(data, dtype=np.float64)
    if attention.ndim != 2 or attention.size == 0:
        raise ValueError(f"Attention map must be a non-empty 2-D array, got {attention.shape}")
    if not np.all((attention >= 0.0) & (attention <= 1.0)):
        raise ValueError("Attention values must lie in [0, 1]")
    return attention


def as_mask(data: np.ndarray) -> BinaryMask:
    """Validate and convert ``data`` into an (H, W) boolean mask.

    Raises:
        ValueError: If the mask is not 2-D or holds values other than 0 and 1
    """
    raw = np.asarray(data)
    if raw.ndim != 2:
        raise ValueError(f"Mask must be a 2-D array, got {raw.shape}")
    if raw.dtype != np.bool_ and not np.all((raw == 0) | (raw == 1)):
        raise ValueError("Mask entries must be 0 or 1")
    return raw.astype(np.bool_)


def to_grayscale(image: ImageTensor) -> NDArray[np.float64]:
    """Collapse an image to one channel with ITU-R BT.601 luma weights.

    Returns:
        (H, W) float64 array
    """
    image = as_image(image)
    if image.shape[2] == 1:
        return image[:, :, 0].copy()
    return image @ np.array([0.299, 0.587, 0.114])
