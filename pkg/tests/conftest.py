"""Pytest configuration and shared fixtures"""

from pathlib import Path

import numpy as np
import pytest

from src.dataset import synth
from src.rng import RngStream

GOLDEN_DIR = Path(__file__).parent / "golden"


class ZeroNoiseRng(RngStream):
    """Stream whose normal draws are all zero (forks included)"""

    def standard_normal(self, shape):
        self.draw_count += int(np.prod(shape))
        return np.zeros(shape)

    def fork(self, stream_id):
        return ZeroNoiseRng(self.seed, self.stream + (stream_id,))


class LinearDenoiser:
    """Cheap deterministic predictor that depends on both x and z_t"""

    def __init__(self, z_weight=0.3, x_weight=0.1):
        self.z_weight = z_weight
        self.x_weight = x_weight

    def predict(self, x_cond, z_t, gamma_t):
        return self.z_weight * np.tanh(z_t) * gamma_t + self.x_weight * x_cond


class ZeroDenoiser:
    """Predicts no noise at all"""

    def predict(self, x_cond, z_t, gamma_t):
        return np.zeros_like(z_t)


@pytest.fixture
def zero_rng():
    """RNG stub producing all-zero noise"""
    return ZeroNoiseRng(0)


@pytest.fixture
def zero_denoiser():
    return ZeroDenoiser()


@pytest.fixture
def linear_denoiser():
    return LinearDenoiser()


@pytest.fixture
def ramp_image():
    """8x8 RGB image with distinct smooth channels"""
    rows, cols = np.mgrid[0:8, 0:8] / 7.0
    return np.stack([rows, cols, (rows + cols) / 2.0], axis=2)


@pytest.fixture
def dataset_dir(tmp_path):
    """Directory holding four synthetic 16x16 RGB images"""
    data = tmp_path / "data"
    synth(data, count=4, size=16, seed=3)
    return data


@pytest.fixture
def golden():
    """Compare an array against a stored snapshot, writing it on first use"""

    def check(name, values, rtol=0.0):
        path = GOLDEN_DIR / f"{name}.npy"
        if not path.exists():
            GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
            np.save(path, values)
            return
        expected = np.load(path)
        if rtol == 0.0:
            np.testing.assert_array_equal(values, expected)
        else:
            np.testing.assert_allclose(values, expected, rtol=rtol)

    return check
