"""Attention map extraction from low-resolution images.

Non-learnable extractors (centered Gaussian, Canny edges, DoG keypoints), MAX/AVG
aggregation, bilinear resampling to the high-resolution grid, and loading of
precomputed external maps.
"""

from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import ndimage

from src.core_types import AttentionMap, BinaryMask, ImageTensor, as_attention, to_grayscale
from src.dataset import load_image
from src.logger import get_logger
from src.map_io import SUFFIX, quantize_map, read_map
from src.resample import bicubic_resize

logger = get_logger(__name__)

# Largest Sobel magnitude a [0, 1] image can produce: |gx|, |gy| <= 4.
SOBEL_MAX = 4.0 * np.sqrt(2.0)


class ExtractorKind(Enum):
    """Available attention extractors"""

    GAUSSIAN = "gaussian"
    EDGE = "edge"
    SIFT = "sift"
    EXTERNAL = "external"


class Aggregation(Enum):
    """Element-wise combination of several attention maps"""

    MAX = "max"
    AVG = "avg"


@dataclass(frozen=True)
class ExtractorConfig:
    """Parameters for one attention extractor."""

    kind: ExtractorKind = ExtractorKind.EDGE
    gaussian_sigma_frac: float = 0.25
    canny_sigma: float = 1.0
    canny_low: float = 0.1
    canny_high: float = 0.2
    dilation_radius: int = 2
    blur_sigma: float = 2.0
    sift_octaves: int = 2
    sift_levels_per_octave: int = 3
    sift_sigma0: float = 1.6
    sift_contrast_threshold: float = 0.01
    sift_edge_ratio: float = 10.0
    sift_blob_sigma_scale: float = 1.5
    external_path: Path | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ExtractorKind(self.kind))
        if not 0.0 <= self.canny_low < self.canny_high <= 1.0:
            raise ValueError("Canny thresholds must satisfy 0 <= low < high <= 1")
        sigmas = (self.gaussian_sigma_frac, self.canny_sigma, self.blur_sigma, self.sift_sigma0)
        if min(sigmas) <= 0.0 or self.sift_blob_sigma_scale <= 0.0:
            raise ValueError("Sigmas and the blob scale must be positive")
        if self.sift_octaves < 1 or self.sift_levels_per_octave < 1:
            raise ValueError("SIFT octave and level counts must be at least 1")
        if self.dilation_radius < 0:
            raise ValueError("Dilation radius cannot be negative")
        if self.kind is ExtractorKind.EXTERNAL and self.external_path is None:
            raise ValueError("External extractor needs external_path")


def parse_extractors(spec: str, **overrides) -> tuple[ExtractorConfig, ...]:
    """Parse a comma-separated extractor list such as ``edge,sift`` or ``external:DIR``.

    Raises:
        ValueError: On an unknown extractor name or an empty list
    """
    configs = []
    for item in (part.strip() for part in spec.split(",")):
        if not item:
            continue
        name, _, argument = item.partition(":")
        try:
            kind = ExtractorKind(name)
        except ValueError:
            valid = ", ".join(k.value for k in ExtractorKind)
            message = f"Unknown attention extractor {name!r} (expected one of {valid})"
            raise ValueError(message) from None
        external = Path(argument) if argument else None
        configs.append(ExtractorConfig(kind=kind, external_path=external, **overrides))
    if not configs:
        raise ValueError("At least one attention extractor is required")
    return tuple(configs)


def normalize_min_max(values: np.ndarray) -> AttentionMap:
    """Scale values to [0, 1]; a flat input maps to all zeros."""
    low, high = float(values.min()), float(values.max())
    if high <= low:
        return np.zeros_like(values, dtype=np.float64)
    return np.clip((values - low) / (high - low), 0.0, 1.0)


def extract_gaussian(height: int, width: int, sigma_frac: float) -> AttentionMap:
    """Centered isotropic Gaussian, sigma = sigma_frac * min(height, width).

    The pixel(s) nearest the center carry exactly 1.
    """
    if height < 1 or width < 1:
        raise ValueError(f"Map dimensions must be positive, got {height}x{width}")
    if sigma_frac <= 0.0:
        raise ValueError(f"sigma_frac must be positive, got {sigma_frac}")
    sigma = sigma_frac * min(height, width)
    rows = np.arange(height) - (height - 1) / 2.0
    cols = np.arange(width) - (width - 1) / 2.0
    dist2 = rows[:, np.newaxis] ** 2 + cols[np.newaxis, :] ** 2
    values = np.exp(-dist2 / (2.0 * sigma * sigma))
    return values / values.max()


def _direction_offsets(gx: np.ndarray, gy: np.ndarray) -> list[tuple[np.ndarray, int, int]]:
    """Quantize gradient direction into four (mask, row step, col step) groups."""
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    return [
        ((angle < 22.5) | (angle >= 157.5), 0, 1),
        ((angle >= 22.5) & (angle < 67.5), 1, 1),
        ((angle >= 67.5) & (angle < 112.5), 1, 0),
        ((angle >= 112.5) & (angle < 157.5), 1, -1),
    ]


def non_max_suppression(magnitude: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep pixels that are >= both neighbors along the gradient direction."""
    height, width = magnitude.shape
    padded = np.pad(magnitude, 1)
    kept = np.zeros_like(magnitude)
    for group, dr, dc in _direction_offsets(gx, gy):
        ahead = padded[1 + dr:1 + dr + height, 1 + dc:1 + dc + width]
        behind = padded[1 - dr:1 - dr + height, 1 - dc:1 - dc + width]
        local_max = group & (magnitude > 0.0) & (magnitude >= ahead) & (magnitude >= behind)
        kept[local_max] = magnitude[local_max]
    return kept


def hysteresis(suppressed: np.ndarray, low: float, high: float) -> BinaryMask:
    """Keep 8-connected weak-edge components that touch a strong edge."""
    weak = (suppressed >= low) & (suppressed > 0.0)
    strong = weak & (suppressed >= high)
    labels, _ = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    keep = np.unique(labels[strong])
    return np.isin(labels, keep[keep > 0])


def canny_edges(gray: np.ndarray, cfg: ExtractorConfig) -> BinaryMask:
    """Binary Canny edge map of a (H, W) grayscale image.

    Gradient magnitudes are divided by the largest Sobel response a [0, 1]
    image can produce, so thresholds are absolute and lie in [0, 1].
    """
    smoothed = ndimage.gaussian_filter(gray, cfg.canny_sigma, mode="nearest")
    gx = ndimage.sobel(smoothed, axis=1, mode="nearest")
    gy = ndimage.sobel(smoothed, axis=0, mode="nearest")
    magnitude = np.hypot(gx, gy) / SOBEL_MAX
    suppressed = non_max_suppression(magnitude, gx, gy)
    return hysteresis(suppressed, cfg.canny_low, cfg.canny_high)


def disk(radius: int) -> np.ndarray:
    """Boolean disk structuring element of the given radius."""
    offsets = np.arange(-radius, radius + 1)
    return offsets[:, np.newaxis] ** 2 + offsets[np.newaxis, :] ** 2 <= radius * radius


def extract_edge(image: ImageTensor, cfg: ExtractorConfig) -> AttentionMap:
    """Edge attention: Canny edges, connected by dilation, then blurred."""
    edges = canny_edges(to_grayscale(image), cfg)
    if not edges.any():
        return np.zeros(edges.shape)
    if cfg.dilation_radius > 0:
        edges = ndimage.binary_dilation(edges, structure=disk(cfg.dilation_radius))
    blurred = ndimage.gaussian_filter(edges.astype(np.float64), cfg.blur_sigma, mode="nearest")
    return normalize_min_max(blurred)


@dataclass(frozen=True)
class Keypoint:
    """DoG extremum in original-resolution coordinates."""

    row: float
    col: float
    scale: float
    response: float


def _edge_like(layer: np.ndarray, rows: np.ndarray, cols: np.ndarray, ratio: float) -> np.ndarray:
    """Flag candidates whose principal curvature ratio exceeds ``ratio``."""
    center = layer[rows, cols]
    dxx = layer[rows, cols + 1] + layer[rows, cols - 1] - 2.0 * center
    dyy = layer[rows + 1, cols] + layer[rows - 1, cols] - 2.0 * center
    dxy = (
        layer[rows + 1, cols + 1] - layer[rows + 1, cols - 1]
        - layer[rows - 1, cols + 1] + layer[rows - 1, cols - 1]
    ) / 4.0
    trace = dxx + dyy
    det = dxx * dyy - dxy * dxy
    return (det <= 0.0) | (trace * trace * ratio >= (ratio + 1.0) ** 2 * det)


def detect_keypoints(gray: np.ndarray, cfg: ExtractorConfig) -> list[Keypoint]:
    """Find scale-space extrema of the difference-of-Gaussians pyramid.

    Raises:
        ValueError: If the image is smaller than 2**octaves on a side
    """
    height, width = gray.shape
    if min(height, width) < 2 ** cfg.sift_octaves:
        raise ValueError(
            f"Image {height}x{width} is too small for {cfg.sift_octaves} octaves"
        )
    levels = cfg.sift_levels_per_octave
    keypoints: list[Keypoint] = []
    for octave in range(cfg.sift_octaves):
        oct_h, oct_w = height >> octave, width >> octave
        base = gray if octave == 0 else bicubic_resize(gray, oct_h, oct_w)[:, :, 0]
        blurred = np.stack([
            ndimage.gaussian_filter(base, cfg.sift_sigma0 * 2.0 ** (s / levels), mode="nearest")
            for s in range(-1, levels + 2)
        ])
        dog = np.diff(blurred, axis=0)
        if oct_h < 3 or oct_w < 3:
            continue
        peaks = ndimage.maximum_filter(dog, size=3, mode="nearest")
        troughs = ndimage.minimum_filter(dog, size=3, mode="nearest")
        strong = np.abs(dog) >= cfg.sift_contrast_threshold
        extremum = ((dog == peaks) | (dog == troughs)) & strong
        extremum[0] = extremum[-1] = False
        extremum[:, [0, -1], :] = False
        extremum[:, :, [0, -1]] = False
        for layer_index in range(1, levels + 1):
            rows, cols = np.nonzero(extremum[layer_index])
            if rows.size == 0:
                continue
            layer = dog[layer_index]
            keep = ~_edge_like(layer, rows, cols, cfg.sift_edge_ratio)
            sigma = cfg.sift_sigma0 * 2.0 ** (octave + (layer_index - 1) / levels)
            for r, c in zip(rows[keep], cols[keep]):
                keypoints.append(Keypoint(
                    row=(r + 0.5) * height / oct_h - 0.5,
                    col=(c + 0.5) * width / oct_w - 0.5,
                    scale=sigma,
                    response=abs(float(layer[r, c])),
                ))
    logger.debug("keypoints_detected", count=len(keypoints))
    return keypoints


def extract_sift(image: ImageTensor, cfg: ExtractorConfig) -> AttentionMap:
    """Keypoint attention: a response-weighted Gaussian blob per DoG keypoint.

    The map is the pixelwise max over blobs, scaled so its maximum is 1.
    """
    gray = to_grayscale(image)
    keypoints = detect_keypoints(gray, cfg)
    attention = np.zeros(gray.shape)
    if not keypoints:
        return attention
    rows = np.arange(gray.shape[0])[:, np.newaxis]
    cols = np.arange(gray.shape[1])[np.newaxis, :]
    for kp in keypoints:
        sigma = cfg.sift_blob_sigma_scale * kp.scale
        blob = kp.response * np.exp(
            -((rows - kp.row) ** 2 + (cols - kp.col) ** 2) / (2.0 * sigma * sigma)
        )
        np.maximum(attention, blob, out=attention)
    return np.clip(attention / attention.max(), 0.0, 1.0)


def external_map_path(cfg: ExtractorConfig, image_id: str | None) -> Path:
    """File an external extractor reads for ``image_id``.

    In a directory ``<id>.ymap`` is preferred over ``<id>.png``.

    Raises:
        ValueError: If ``external_path`` is a directory and no id is given
    """
    path = Path(cfg.external_path)
    if not path.is_dir():
        return path
    if image_id is None:
        raise ValueError("An image id is required to look up maps in a directory")
    candidate = path / f"{image_id}{SUFFIX}"
    if candidate.exists():
        return candidate
    png = path / f"{image_id}.png"
    return png if png.exists() else candidate


def load_external(cfg: ExtractorConfig, image_id: str | None) -> AttentionMap:
    """Read a precomputed map: a .ymap file, a grayscale image, or a directory of them."""
    path = external_map_path(cfg, image_id)
    if path.suffix == SUFFIX:
        return read_map(path)
    return as_attention(np.clip(to_grayscale(load_image(path)), 0.0, 1.0))


def extract(image: ImageTensor, cfg: ExtractorConfig, image_id: str | None = None) -> AttentionMap:
    """Run the extractor named by ``cfg.kind`` at the image's resolution."""
    if cfg.kind is ExtractorKind.GAUSSIAN:
        return extract_gaussian(image.shape[0], image.shape[1], cfg.gaussian_sigma_frac)
    if cfg.kind is ExtractorKind.EDGE:
        return extract_edge(image, cfg)
    if cfg.kind is ExtractorKind.SIFT:
        return extract_sift(image, cfg)
    return load_external(cfg, image_id)


def aggregate(maps: Sequence[AttentionMap], mode: Aggregation | str) -> AttentionMap:
    """Combine maps element-wise by maximum or mean.

    Raises:
        ValueError: If no maps are given or their dimensions differ
    """
    mode = Aggregation(mode)
    if not maps:
        raise ValueError("At least one attention map is required")
    shape = maps[0].shape
    if any(m.shape != shape for m in maps):
        raise ValueError(f"Attention maps differ in shape: {[m.shape for m in maps]}")
    stack = np.stack([as_attention(m) for m in maps])
    if mode is Aggregation.MAX:
        return stack.max(axis=0)
    return np.clip(stack.mean(axis=0), 0.0, 1.0)


def resample_map(attention: AttentionMap, height: int, width: int) -> AttentionMap:
    """Bilinear resampling on pixel centers, clamped to [0, 1]."""
    if height < 1 or width < 1:
        raise ValueError(f"Target dimensions must be positive, got {height}x{width}")
    attention = as_attention(attention)
    in_h, in_w = attention.shape
    if (in_h, in_w) == (height, width):
        return attention.copy()
    rows = (np.arange(height) + 0.5) * in_h / height - 0.5
    cols = (np.arange(width) + 0.5) * in_w / width - 0.5
    grid = np.meshgrid(rows, cols, indexing="ij")
    values = ndimage.map_coordinates(attention, grid, order=1, mode="nearest")
    return np.clip(values, 0.0, 1.0)


def build_attention(
    lr: ImageTensor,
    hr_shape: tuple[int, int],
    configs: Sequence[ExtractorConfig],
    mode: Aggregation | str = Aggregation.MAX,
    image_id: str | None = None,
) -> AttentionMap:
    """Extract every configured map from the LR image and merge them at HR size.

    The result is rounded to binary32 so it equals what a cached .ymap holds.
    """
    height, width = hr_shape
    maps = [resample_map(extract(lr, cfg, image_id), height, width) for cfg in configs]
    return quantize_map(aggregate(maps, mode))
