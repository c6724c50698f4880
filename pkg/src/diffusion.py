"""DDPM machinery: forward corruption, reverse steps, and the baseline sampler.

RNG contract for the samplers: z_T consumes H*W*C normals, each non-final
reverse step consumes H*W*C normals, and the final step (t = 1) consumes none.
"""

from typing import Protocol

import numpy as np

from src.core_types import ImageTensor, ensure_finite
from src.logger import get_logger
from src.rng import RngStream, gaussian_sample
from src.schedule import NoiseSchedule

logger = get_logger(__name__)


class Denoiser(Protocol):
    """Noise predictor f(x, z_t, gamma_t)."""

    def predict(self, x_cond: ImageTensor, z_t: ImageTensor, gamma_t: float) -> ImageTensor:
        """Predict the noise in ``z_t``; output has the shape of ``z_t``."""
        ...


def analytic_predict(
    mean: np.ndarray | float,
    std: float,
    z_t: ImageTensor,
    gamma_t: float,
) -> ImageTensor:
    """Exact E[eps | z_t] when z_0 ~ N(mean, std^2 I).

    z_t and eps are jointly Gaussian with Cov(eps, z_t) = sqrt(1 - gamma) and
    Var(z_t) = gamma std^2 + 1 - gamma, so
    E[eps | z_t] = sqrt(1 - gamma) (z_t - sqrt(gamma) mean) / (gamma std^2 + 1 - gamma).
    """
    if std <= 0.0:
        raise ValueError(f"std must be positive, got {std}")
    if not 0.0 < gamma_t <= 1.0:
        raise ValueError(f"gamma_t must be in (0, 1], got {gamma_t}")
    variance = gamma_t * std * std + 1.0 - gamma_t
    return np.sqrt(1.0 - gamma_t) * (z_t - np.sqrt(gamma_t) * np.asarray(mean)) / variance


class AnalyticGaussianDenoiser:
    """Exact conditional-expectation denoiser for Gaussian data; ignores x."""

    def __init__(self, mean: np.ndarray | float, std: float):
        """
        Args:
            mean: Per-channel data mean (scalar or length-C array)
            std: Data standard deviation, > 0
        """
        if std <= 0.0:
            raise ValueError(f"std must be positive, got {std}")
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = float(std)

    def predict(self, x_cond: ImageTensor, z_t: ImageTensor, gamma_t: float) -> ImageTensor:
        return analytic_predict(self.mean, self.std, z_t, gamma_t)


def forward_sample(
    z0: ImageTensor,
    gamma_t: float,
    rng: RngStream,
) -> tuple[ImageTensor, ImageTensor]:
    """Corrupt z0 to noise level gamma_t.

    Returns:
        (z_t, eps) with z_t = sqrt(gamma) z0 + sqrt(1 - gamma) eps
    """
    if not 0.0 < gamma_t <= 1.0:
        raise ValueError(f"gamma_t must be in (0, 1], got {gamma_t}")
    eps = gaussian_sample(rng, z0.shape)
    z_t = np.sqrt(gamma_t) * z0 + np.sqrt(1.0 - gamma_t) * eps
    return z_t, eps


def posterior_mean(
    denoiser: Denoiser,
    x: ImageTensor,
    z_t: ImageTensor,
    alpha_t: float,
    gamma_t: float,
) -> ImageTensor:
    """mu = (z_t - (1 - alpha) / sqrt(1 - gamma) * f(x, z_t, gamma)) / sqrt(alpha).

    Raises:
        ValueError: If alpha or gamma lie outside (0, 1)
    """
    if not 0.0 < alpha_t < 1.0:
        raise ValueError(f"alpha_t must be in (0, 1), got {alpha_t}")
    if not 0.0 < gamma_t < 1.0:
        raise ValueError(f"gamma_t must be in (0, 1), got {gamma_t}")
    eps_hat = denoiser.predict(x, z_t, gamma_t)
    if eps_hat.shape != z_t.shape:
        raise ValueError(f"Denoiser returned shape {eps_hat.shape}, expected {z_t.shape}")
    coefficient = (1.0 - alpha_t) / np.sqrt(1.0 - gamma_t)
    return (z_t - coefficient * eps_hat) / np.sqrt(alpha_t)


def reverse_step(
    denoiser: Denoiser,
    x: ImageTensor,
    z_t: ImageTensor,
    alpha_t: float,
    gamma_t: float,
    rng: RngStream,
    final: bool = False,
) -> ImageTensor:
    """One reverse transition z_t -> z_{t-1} with variance (1 - alpha_t).

    The final step returns the posterior mean and draws nothing.
    """
    mean = posterior_mean(denoiser, x, z_t, alpha_t, gamma_t)
    if final:
        return mean
    return mean + np.sqrt(1.0 - alpha_t) * gaussian_sample(rng, z_t.shape)


def baseline_sample(
    denoiser: Denoiser,
    x: ImageTensor,
    schedule: NoiseSchedule,
    rng: RngStream,
) -> ImageTensor:
    """Unguided reverse process from z_T ~ N(0, I) down to z_0.

    ``x`` is the conditioning image at output resolution. States are not
    clamped along the way; the returned image is clipped to [0, 1].

    Raises:
        NumericError: If the trajectory produces non-finite values
    """
    z = gaussian_sample(rng, x.shape)
    for t in range(schedule.T, 0, -1):
        z = reverse_step(
            denoiser, x, z, schedule.alpha(t), schedule.gamma(t), rng, final=(t == 1)
        )
    ensure_finite(z, "baseline sample")
    logger.debug("baseline_sample_complete", T=schedule.T, shape=x.shape)
    return np.clip(z, 0.0, 1.0)
