"""Deterministic random streams and Box-Muller normal sampling.

Uniforms come from numpy's Philox counter-based generator, which produces the
same bits on every platform. Normals are derived from those uniforms with an
explicit Box-Muller pairing so the normal sequence does not depend on numpy's
internal normal algorithm.

Draw ordering: ``n`` normals consume ``2 * ceil(n / 2)`` uniforms
``u[0], u[1], ...``. Pair ``k`` uses ``u1 = 1 - u[2k]`` and ``u2 = u[2k + 1]``
and yields ``z[2k] = r cos(2 pi u2)`` and ``z[2k + 1] = r sin(2 pi u2)`` with
``r = sqrt(-2 ln u1)``. For odd ``n`` the last sine value is discarded.
"""

import numpy as np

from src.core_types import ImageTensor

ALGORITHM = "philox4x64-boxmuller"


class RngStream:
    """Seeded stream of uniform and standard-normal variates."""

    def __init__(self, seed: int, stream: tuple[int, ...] = ()):
        """
        Initialize a stream

        Args:
            seed: 64-bit seed
            stream: Spawn key identifying a forked sub-stream
        """
        if not 0 <= seed < 2**64:
            raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.stream = tuple(stream)
        self.algorithm = ALGORITHM
        sequence = np.random.SeedSequence(seed, spawn_key=self.stream)
        self._generator = np.random.Generator(np.random.Philox(sequence))
        self.draw_count = 0

    def fork(self, stream_id: int) -> "RngStream":
        """Create an independent child stream.

        The child depends only on this stream's seed and key, never on how
        many values have been drawn so far.
        """
        return RngStream(self.seed, self.stream + (stream_id,))

    def uniform(self, size: int) -> np.ndarray:
        """Draw ``size`` uniforms in [0, 1)."""
        return self._generator.random(size)

    def integers(self, low: int, high: int, size: int | None = None) -> np.ndarray | int:
        """Draw integers uniformly from [low, high)."""
        return self._generator.integers(low, high, size=size)

    def standard_normal(self, shape: tuple[int, ...]) -> np.ndarray:
        """Draw i.i.d. N(0, 1) values of the given shape via Box-Muller.

        Raises:
            ValueError: If the shape has a zero-sized dimension
        """
        count = int(np.prod(shape))
        if count <= 0 or any(dim <= 0 for dim in shape):
            raise ValueError(f"Shape must be non-empty, got {shape}")
        pairs = (count + 1) // 2
        u = self._generator.random(2 * pairs)
        u1 = 1.0 - u[0::2]
        u2 = u[1::2]
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * np.pi * u2
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        self.draw_count += count
        return z[:count].reshape(shape)


def gaussian_sample(rng: RngStream, shape: tuple[int, ...]) -> ImageTensor:
    """Draw an array of i.i.d. standard normal values.

    Args:
        rng: Source stream, advanced by ``prod(shape)`` normal draws
        shape: Output shape

    Returns:
        float64 array of the requested shape
    """
    return rng.standard_normal(tuple(shape))
