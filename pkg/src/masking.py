"""Time-dependent attention masks and their schedule statistics.

A pixel with attention A and lower bound l is active at step t when
T * (A + l) >= t. Each pixel therefore has an activation count
floor(T * (A + l)): it is active for every t up to that count and inactive
above it.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from src.core_types import AttentionMap, BinaryMask, as_attention

DEFAULT_LOWER_BOUND = 0.2

# T * (A + l) products this close below an integer count as that integer.
SNAP_TOLERANCE = 1e-9


def activation_steps(attention: AttentionMap, T: int, lower_bound: float) -> np.ndarray:
    """Largest step index at which each pixel is active."""
    products = T * (np.asarray(attention, dtype=np.float64) + lower_bound)
    return np.floor(products + SNAP_TOLERANCE).astype(np.int64)


@dataclass(frozen=True, eq=False)
class MaskSchedule:
    """Mask generator for an attention map over T steps with lower bound l."""

    attention: AttentionMap
    T: int
    lower_bound: float = DEFAULT_LOWER_BOUND

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"T must be at least 1, got {self.T}")
        if not 0.0 < self.lower_bound < 1.0:
            raise ValueError(f"Lower bound must satisfy 0 < l < 1, got {self.lower_bound}")
        attention = as_attention(self.attention).copy()
        attention.setflags(write=False)
        object.__setattr__(self, "attention", attention)

    @property
    def shape(self) -> tuple[int, int]:
        return self.attention.shape

    @cached_property
    def steps(self) -> np.ndarray:
        """Per-pixel activation count, capped at T."""
        return np.minimum(activation_steps(self.attention, self.T, self.lower_bound), self.T)


def mask_at(schedule: MaskSchedule, t: int) -> BinaryMask:
    """Binary mask M(t): 1 where T * (A + l) >= t.

    Raises:
        ValueError: If t is outside [0, T]
    """
    if not 0 <= t <= schedule.T:
        raise ValueError(f"Step must be in [0, {schedule.T}], got {t}")
    return schedule.steps >= t


def diffused_pixel_ratio(schedule: MaskSchedule) -> float:
    """Share of pixel updates performed relative to diffusing every pixel at every step."""
    height, width = schedule.shape
    return int(schedule.steps.sum()) / (schedule.T * height * width)


def coverage_curve(schedule: MaskSchedule) -> list[tuple[int, float]]:
    """Fraction of active pixels for t = T down to 0."""
    counts = np.bincount(schedule.steps.ravel(), minlength=schedule.T + 1)
    # active at t = pixels whose activation count is >= t
    active = np.cumsum(counts[::-1])[::-1]
    total = schedule.attention.size
    return [(t, int(active[t]) / total) for t in range(schedule.T, -1, -1)]


def mean_coverage(schedules: list[MaskSchedule]) -> list[tuple[int, float]]:
    """Average coverage curve over several schedules sharing T."""
    if not schedules:
        raise ValueError("At least one mask schedule is required")
    T = schedules[0].T
    if any(s.T != T for s in schedules):
        raise ValueError("All mask schedules must share T")
    curves = np.array([[frac for _, frac in coverage_curve(s)] for s in schedules])
    return list(zip(range(T, -1, -1), curves.mean(axis=0).tolist()))


def checkpoint_steps(T: int, count: int) -> list[int]:
    """Evenly spaced step indices from T down to 1, at most ``count`` of them."""
    if count < 1:
        return []
    points = np.unique(np.round(np.linspace(T, 1, min(count, T))).astype(int))
    return sorted(points.tolist(), reverse=True)
