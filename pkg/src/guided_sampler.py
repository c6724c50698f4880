"""Attention-guided reverse diffusion.

At each step t the active region M(t) is refined by the denoiser (SR branch)
while the inactive region is redrawn around the upsampled LR image (LR
branch); the two are stitched into a state without holes.

RNG contract: z_T and the SR-branch noise come from the caller's stream in the
same order as ``baseline_sample``; the LR-branch noise comes from the fork
``LR_BRANCH_STREAM`` of that stream (or reuses the SR draw when noise is
shared). Each non-final step draws H*W*C normals per stream; the final step
draws none.
"""

from dataclasses import dataclass, field

import numpy as np

from src.core_types import BinaryMask, ImageTensor, as_image, ensure_finite
from src.diffusion import Denoiser, posterior_mean
from src.logger import get_logger
from src.masking import MaskSchedule, checkpoint_steps, mask_at
from src.resample import bicubic_resize
from src.rng import RngStream, gaussian_sample
from src.schedule import NoiseSchedule

logger = get_logger(__name__)

LR_BRANCH_STREAM = 1
DEFAULT_TRAJECTORY_POINTS = 10


@dataclass(frozen=True)
class GuidedConfig:
    """Settings for one guided sampling run."""

    schedule: NoiseSchedule
    mask_schedule: MaskSchedule
    mask_input: bool = True
    shared_branch_noise: bool = False
    record_trajectory: bool = False
    trajectory_points: int = DEFAULT_TRAJECTORY_POINTS

    def __post_init__(self):
        if self.mask_schedule.T != self.schedule.T:
            raise ValueError(
                f"Mask schedule has T={self.mask_schedule.T}, noise schedule T={self.schedule.T}"
            )

    @property
    def hr_shape(self) -> tuple[int, int]:
        return self.mask_schedule.shape


@dataclass(frozen=True)
class TrajectoryPoint:
    """State z_{t-1} produced by step t, with the mask used."""

    t: int
    state: ImageTensor
    mask: BinaryMask


@dataclass
class GuidedResult:
    """Output image plus any recorded trajectory."""

    image: ImageTensor
    trajectory: list[TrajectoryPoint] = field(default_factory=list)


def masked_state(z_t: ImageTensor, mask: BinaryMask) -> ImageTensor:
    """Zero out the inactive pixels of z_t (mask broadcast over channels).

    Raises:
        ValueError: If the spatial dimensions differ
    """
    if z_t.shape[:2] != mask.shape:
        raise ValueError(f"Mask shape {mask.shape} does not match state {z_t.shape[:2]}")
    return np.where(mask[:, :, np.newaxis], z_t, 0.0)


def guided_step(
    denoiser: Denoiser,
    x_up: ImageTensor,
    z_t: ImageTensor,
    t: int,
    cfg: GuidedConfig,
    rng: RngStream,
    lr_rng: RngStream | None = None,
) -> ImageTensor:
    """One guided transition z_t -> z_{t-1}.

    Args:
        denoiser: Noise predictor
        x_up: LR image upsampled to the state's resolution
        z_t: Current state
        t: Source step index, 1 <= t <= T
        cfg: Guided sampling settings
        rng: Stream for the SR branch
        lr_rng: Stream for the LR branch; defaults to
            ``rng.fork(LR_BRANCH_STREAM).fork(t)`` so each step draws fresh noise

    Raises:
        NumericError: If the new state holds non-finite values
    """
    schedule = cfg.schedule
    alpha_t, gamma_t = schedule.alpha(t), schedule.gamma(t)
    mask = mask_at(cfg.mask_schedule, t)
    z_in = masked_state(z_t, mask) if cfg.mask_input else z_t
    sr = posterior_mean(denoiser, x_up, z_in, alpha_t, gamma_t)
    lr = x_up
    if t > 1:
        sigma = np.sqrt(1.0 - alpha_t)
        sr_noise = gaussian_sample(rng, z_t.shape)
        if cfg.shared_branch_noise:
            lr_noise = sr_noise
        else:
            if lr_rng is None:
                lr_rng = rng.fork(LR_BRANCH_STREAM).fork(t)
            lr_noise = gaussian_sample(lr_rng, z_t.shape)
        sr = sr + sigma * sr_noise
        lr = x_up + sigma * lr_noise
    return ensure_finite(np.where(mask[:, :, np.newaxis], sr, lr), f"guided state at t={t}")


def yoda_sample(
    denoiser: Denoiser,
    x_lr: ImageTensor,
    cfg: GuidedConfig,
    rng: RngStream,
) -> GuidedResult:
    """Full guided reverse process for one LR image.

    Raises:
        NumericError: If any step produces non-finite values
    """
    height, width = cfg.hr_shape
    x_up = bicubic_resize(as_image(x_lr), height, width)
    lr_rng = rng.fork(LR_BRANCH_STREAM)
    z = gaussian_sample(rng, x_up.shape)
    record = set(checkpoint_steps(cfg.schedule.T, cfg.trajectory_points))
    trajectory: list[TrajectoryPoint] = []
    for t in range(cfg.schedule.T, 0, -1):
        z = guided_step(denoiser, x_up, z, t, cfg, rng, lr_rng)
        if cfg.record_trajectory and t in record:
            mask = mask_at(cfg.mask_schedule, t)
            trajectory.append(TrajectoryPoint(t=t, state=z.copy(), mask=mask))
    logger.debug(
        "guided_sample_complete",
        T=cfg.schedule.T,
        shape=x_up.shape,
        mask_input=cfg.mask_input,
        recorded=len(trajectory),
    )
    return GuidedResult(image=np.clip(z, 0.0, 1.0), trajectory=trajectory)
