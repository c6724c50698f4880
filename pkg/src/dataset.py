"""Image files, dataset ingestion, and the synthetic dataset generator."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from src.core_types import BinaryMask, DataError, ImageTensor, as_image
from src.logger import get_logger
from src.resample import bicubic_resize
from src.rng import RngStream

logger = get_logger(__name__)

GRAYSCALE_MODES = ("1", "L", "LA", "I", "I;16", "F")


@dataclass(frozen=True, eq=False)
class SRPair:
    """Low/high resolution pair sharing an id (the file stem)."""

    id: str
    lr: ImageTensor
    hr: ImageTensor


def load_image(path: Path | str) -> ImageTensor:
    """Decode an 8-bit image to [0, 1] floats.

    Raises:
        DataError: If the file cannot be decoded
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            mode = "L" if img.mode in GRAYSCALE_MODES else "RGB"
            pixels = np.asarray(img.convert(mode), dtype=np.float64)
    except (UnidentifiedImageError, OSError) as e:
        raise DataError(f"Cannot decode image {path}: {e}") from e
    return as_image(pixels / 255.0)


def save_image(image: ImageTensor, path: Path | str) -> Path:
    """Write an image as 8-bit PNG using round(v * 255)."""
    image = as_image(image)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pixels = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    # 2-D uint8 arrays become mode L, (H, W, 3) arrays mode RGB
    Image.fromarray(pixels[:, :, 0] if pixels.shape[2] == 1 else pixels).save(path, format="PNG")
    return path


def save_mask(mask: BinaryMask, path: Path | str) -> Path:
    """Write a binary mask as a black/white PNG."""
    pixels = np.where(np.asarray(mask, dtype=bool), 1.0, 0.0)
    return save_image(pixels, path)


def center_crop(image: ImageTensor, scale: int) -> ImageTensor:
    """Crop height and width down to the nearest multiple of ``scale``."""
    height, width = image.shape[:2]
    new_h, new_w = height - height % scale, width - width % scale
    top, left = (height - new_h) // 2, (width - new_w) // 2
    return image[top:top + new_h, left:left + new_w]


def ingest(data_dir: Path | str, scale: int) -> list[SRPair]:
    """Load every decodable image in ``data_dir`` and derive its LR version.

    Files are visited in lexicographic order. Undecodable files are skipped,
    and images whose sides are not multiples of ``scale`` are center-cropped,
    each with a warning.

    Raises:
        ValueError: If scale < 1
        DataError: If the directory is missing, holds no usable image, or
            mixes grayscale and RGB images
    """
    if scale < 1:
        raise ValueError(f"Scale must be positive, got {scale}")
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataError(f"Data directory not found: {data_dir}")

    pairs = []
    for path in sorted(p for p in data_dir.iterdir() if p.is_file()):
        try:
            hr = load_image(path)
        except DataError as e:
            logger.warning("image_skipped", path=str(path), reason=str(e))
            continue
        if hr.shape[0] % scale or hr.shape[1] % scale:
            cropped = center_crop(hr, scale)
            if cropped.size == 0:
                logger.warning("image_skipped", path=str(path), reason="smaller than scale")
                continue
            logger.warning(
                "image_center_cropped",
                path=str(path),
                original=hr.shape[:2],
                cropped=cropped.shape[:2],
            )
            hr = cropped
        lr = bicubic_resize(hr, hr.shape[0] // scale, hr.shape[1] // scale)
        pairs.append(SRPair(id=path.stem, lr=lr, hr=hr))

    if not pairs:
        raise DataError(f"No decodable images in {data_dir}")
    if len({pair.hr.shape[2] for pair in pairs}) > 1:
        raise DataError(f"{data_dir} mixes grayscale and RGB images")
    logger.info("dataset_ingested", path=str(data_dir), images=len(pairs), scale=scale)
    return pairs


def synth_image(rng: RngStream, size: int, channels: int = 3, detail: int = 6) -> ImageTensor:
    """Band-limited noise background with random rectangles and disks.

    Args:
        rng: Source of randomness
        size: Side length in pixels
        channels: 1 or 3
        detail: Number of shapes drawn on top of the background
    """
    noise = rng.standard_normal((size, size, channels))
    background = ndimage.gaussian_filter(noise, sigma=(size / 8.0, size / 8.0, 0.0))
    spread = float(np.ptp(background)) or 1.0
    image = 0.2 + 0.6 * (background - background.min()) / spread
    rows, cols = np.mgrid[0:size, 0:size]
    for _ in range(detail):
        color = rng.uniform(channels)
        if int(rng.integers(0, 2)) == 0:
            top, left = (int(v) for v in rng.integers(0, size - 1, size=2))
            h, w = (int(v) for v in rng.integers(2, max(3, size // 2), size=2))
            region = (rows >= top) & (rows < top + h) & (cols >= left) & (cols < left + w)
        else:
            cy, cx = rng.integers(0, size, size=2)
            radius = int(rng.integers(2, max(3, size // 4)))
            region = (rows - cy) ** 2 + (cols - cx) ** 2 <= radius**2
        image[region] = color
    return np.clip(image, 0.0, 1.0)


def synth(
    out_dir: Path | str,
    count: int,
    size: int = 32,
    seed: int = 0,
    channels: int = 3,
    detail: int = 6,
) -> list[Path]:
    """Write ``count`` synthetic PNGs; image i depends only on (seed, i)."""
    if count < 1 or size < 4:
        raise ValueError("count must be positive and size at least 4")
    if channels not in (1, 3):
        raise ValueError(f"channels must be 1 or 3, got {channels}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    root = RngStream(seed)
    paths = []
    for index in range(count):
        image = synth_image(root.fork(index), size, channels, detail)
        paths.append(save_image(image, out_dir / f"synth_{index:04d}.png"))
    logger.info("synthetic_dataset_written", path=str(out_dir), images=count, size=size)
    return paths
