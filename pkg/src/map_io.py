"""Attention map files (.ymap).

Layout: the ASCII magic ``YMAP``, u32 little-endian height, u32 little-endian
width, then height * width IEEE-754 binary32 little-endian values in row-major
order. No padding and no checksum.
"""

import struct
from pathlib import Path

import numpy as np

from src.core_types import AttentionMap, DataError, as_attention

MAGIC = b"YMAP"
HEADER = struct.Struct("<4sII")
SUFFIX = ".ymap"


class MapFormatError(DataError):
    """File is not an attention map (bad magic or header)"""


class MapTruncatedError(DataError):
    """Payload is shorter or longer than the header announces"""


class MapRangeError(DataError):
    """Payload holds values outside [0, 1]"""


def write_map(attention: AttentionMap, path: Path | str) -> Path:
    """Write an attention map, rounding values to binary32.

    Returns:
        The written path
    """
    attention = as_attention(attention)
    path = Path(path)
    height, width = attention.shape
    payload = attention.astype("<f4").tobytes(order="C")
    path.write_bytes(HEADER.pack(MAGIC, height, width) + payload)
    return path


def read_map(path: Path | str) -> AttentionMap:
    """Read an attention map as float64.

    Raises:
        FileNotFoundError: If the file does not exist
        MapFormatError: If the magic bytes or dimensions are wrong
        MapTruncatedError: If the payload length does not match the header
        MapRangeError: If any value is NaN or outside [0, 1]
    """
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < HEADER.size:
        raise MapFormatError(f"{path}: file too short for a map header")
    magic, height, width = HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise MapFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if height < 1 or width < 1:
        raise MapFormatError(f"{path}: invalid dimensions {height}x{width}")
    expected = height * width * 4
    payload = blob[HEADER.size:]
    if len(payload) != expected:
        raise MapTruncatedError(
            f"{path}: payload has {len(payload)} bytes, header announces {expected}"
        )
    values = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(height, width)
    if not np.all((values >= 0.0) & (values <= 1.0)):
        raise MapRangeError(f"{path}: values outside [0, 1]")
    return values


def quantize_map(attention: AttentionMap) -> AttentionMap:
    """Round a map to the binary32 precision the file format stores."""
    return np.asarray(attention, dtype=np.float32).astype(np.float64)
