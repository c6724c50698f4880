"""Noise schedules: per-step retained variance alpha and cumulative gamma."""

from dataclasses import dataclass

import numpy as np

from src.logger import get_logger

logger = get_logger(__name__)

DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """Diffusion noise schedule.

    ``alphas[t - 1]`` is alpha_t, the variance retained by step t, and
    ``gammas[t - 1]`` is gamma_t, the product of alpha_1..alpha_t.
    """

    alphas: np.ndarray
    gammas: np.ndarray

    def __post_init__(self):
        alphas = np.asarray(self.alphas, dtype=np.float64)
        gammas = np.asarray(self.gammas, dtype=np.float64)
        if alphas.ndim != 1 or alphas.size < 1 or alphas.shape != gammas.shape:
            raise ValueError("alphas and gammas must be matching non-empty 1-D arrays")
        if not np.all((alphas > 0.0) & (alphas < 1.0)):
            raise ValueError("Every alpha must satisfy 0 < alpha < 1")
        if not gammas[-1] > 0.0:
            raise ValueError("gamma_T must be positive")
        if np.any(np.diff(gammas) >= 0.0) or not gammas[0] < 1.0:
            raise ValueError("gammas must be strictly decreasing and below 1")
        recomputed = np.cumprod(alphas)
        if np.max(np.abs(recomputed - gammas) / gammas) > 1e-12:
            raise ValueError("gammas are not the cumulative product of alphas")
        alphas.setflags(write=False)
        gammas.setflags(write=False)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "gammas", gammas)

    @property
    def T(self) -> int:
        """Number of diffusion steps"""
        return int(self.alphas.size)

    def alpha(self, t: int) -> float:
        """alpha_t for 1 <= t <= T"""
        self._check_step(t)
        return float(self.alphas[t - 1])

    def gamma(self, t: int) -> float:
        """gamma_t for 1 <= t <= T"""
        self._check_step(t)
        return float(self.gammas[t - 1])

    def _check_step(self, t: int) -> None:
        if not 1 <= t <= self.T:
            raise ValueError(f"Step must be in [1, {self.T}], got {t}")


def make_linear_schedule(
    T: int,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Build a schedule with beta linearly spaced from beta_start to beta_end.

    Raises:
        ValueError: If T < 1 or the betas violate 0 < start <= end < 1
    """
    if T < 1:
        raise ValueError(f"T must be at least 1, got {T}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ValueError(
            f"Betas must satisfy 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )
    betas = np.linspace(beta_start, beta_end, T)
    alphas = 1.0 - betas
    return NoiseSchedule(alphas=alphas, gammas=np.cumprod(alphas))


def respace_steps(T: int, T_eval: int) -> np.ndarray:
    """Evenly spaced original step indices kept by respacing, ending at T."""
    k = np.arange(1, T_eval + 1)
    return (k * T + T_eval - 1) // T_eval


def respace_schedule(schedule: NoiseSchedule, T_eval: int) -> NoiseSchedule:
    """Shorten a schedule to ``T_eval`` steps along its gamma trajectory.

    Keeps gamma at steps ceil(k T / T_eval) for k = 1..T_eval, which always
    includes the final step, and derives alpha'_k = gamma'_k / gamma'_{k-1}.

    Raises:
        ValueError: If T_eval is outside [1, T]
    """
    if not 1 <= T_eval <= schedule.T:
        raise ValueError(f"T_eval must be in [1, {schedule.T}], got {T_eval}")
    if T_eval == schedule.T:
        return schedule
    steps = respace_steps(schedule.T, T_eval)
    gammas = schedule.gammas[steps - 1].copy()
    previous = np.concatenate(([1.0], gammas[:-1]))
    logger.debug("schedule_respaced", T=schedule.T, T_eval=T_eval)
    return NoiseSchedule(alphas=gammas / previous, gammas=gammas)
