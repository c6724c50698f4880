"""Masked noise-prediction objective, AdamW, and the training loop."""

from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd
from tqdm import tqdm

from src.core_types import AttentionMap, BinaryMask, ImageTensor, NumericError
from src.dataset import SRPair
from src.denoiser_net import PARAMETER_ORDER, TinyDenoiser
from src.diffusion import forward_sample
from src.logger import get_logger
from src.masking import DEFAULT_LOWER_BOUND, MaskSchedule, mask_at
from src.resample import bicubic_resize
from src.rng import RngStream
from src.schedule import DEFAULT_BETA_END, DEFAULT_BETA_START, make_linear_schedule

logger = get_logger(__name__)


class LossMode(Enum):
    """YODA masks the loss with M(t); FULL is the unmasked baseline"""

    YODA = "yoda"
    FULL = "full"


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings for one training run."""

    learning_rate: float = 5e-5
    weight_decay: float = 1e-4
    batch_size: int = 2
    iterations: int = 300
    T_train: int = 500
    lower_bound: float = DEFAULT_LOWER_BOUND
    seed: int = 0
    mode: LossMode = LossMode.YODA
    beta_start: float = DEFAULT_BETA_START
    beta_end: float = DEFAULT_BETA_END
    hidden: int = 32
    workers: int = 1
    progress: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", LossMode(self.mode))
        if self.learning_rate <= 0.0 or self.weight_decay < 0.0:
            raise ValueError("learning_rate must be positive and weight_decay non-negative")
        if self.batch_size < 1 or self.iterations < 1 or self.T_train < 1 or self.workers < 1:
            raise ValueError("batch_size, iterations, T_train and workers must be positive")
        if not 0.0 < self.lower_bound < 1.0:
            raise ValueError(f"Lower bound must satisfy 0 < l < 1, got {self.lower_bound}")


def masked_loss(
    eps_true: ImageTensor,
    eps_pred: ImageTensor,
    mask: BinaryMask,
    normalize: bool = True,
) -> tuple[float, ImageTensor]:
    """L1 noise-prediction loss restricted to the active pixels of ``mask``.

    With ``normalize`` the sum is divided by the number of active pixels.

    Returns:
        (loss, gradient w.r.t. eps_pred)

    Raises:
        ValueError: If shapes do not match
    """
    if eps_true.shape != eps_pred.shape or eps_true.shape[:2] != mask.shape:
        raise ValueError(
            f"Shape mismatch: eps {eps_true.shape}, prediction {eps_pred.shape}, mask {mask.shape}"
        )
    active = int(np.count_nonzero(mask))
    if active == 0:
        return 0.0, np.zeros_like(eps_pred)
    scale = 1.0 / active if normalize else 1.0
    selected = mask[:, :, np.newaxis]
    residual = eps_true - eps_pred
    loss = float(np.where(selected, np.abs(residual), 0.0).sum()) * scale
    grad = -np.where(selected, np.sign(residual), 0.0) * scale
    return loss, grad


class AdamW:
    """Adam with decoupled weight decay."""

    def __init__(
        self,
        learning_rate: float,
        weight_decay: float = 0.0,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self._first: dict[str, np.ndarray] = {}
        self._second: dict[str, np.ndarray] = {}

    def step(self, model: TinyDenoiser, grads: Mapping[str, np.ndarray]) -> None:
        """Update ``model`` parameters in place."""
        self.step_count += 1
        correction1 = 1.0 - self.beta1 ** self.step_count
        correction2 = 1.0 - self.beta2 ** self.step_count
        for name in PARAMETER_ORDER:
            param, grad = model.params[name], grads[name]
            m = self._first.setdefault(name, np.zeros_like(param))
            v = self._second.setdefault(name, np.zeros_like(param))
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            param -= self.learning_rate * self.weight_decay * param
            param -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
        model.mark_updated()


@dataclass(frozen=True)
class _BatchItem:
    x_up: ImageTensor
    z_t: ImageTensor
    eps: ImageTensor
    gamma_t: float
    mask: BinaryMask


@dataclass
class TrainResult:
    """Trained model and per-iteration loss log."""

    model: TinyDenoiser
    loss_log: pd.DataFrame


def _item_gradients(model: TinyDenoiser, item: _BatchItem) -> tuple[float, dict[str, np.ndarray]]:
    eps_pred, cache = model.forward(item.x_up, item.z_t, item.gamma_t)
    loss, grad_out = masked_loss(item.eps, eps_pred, item.mask)
    return loss, model.backward(cache, grad_out)


def train(
    cfg: TrainConfig,
    dataset: Sequence[SRPair],
    attention: Mapping[str, AttentionMap] | None = None,
) -> TrainResult:
    """Train a TinyDenoiser on (LR, HR) pairs.

    Each iteration draws a batch of images, a step t ~ U{1..T} and noise per
    image, masks the loss with M(t) (mode yoda) or not at all (mode full),
    averages gradients over the batch in order and takes one AdamW step.

    Args:
        cfg: Training settings
        dataset: Pairs to sample from
        attention: HR-resolution attention map per pair id (needed in yoda mode)

    Raises:
        ValueError: If the dataset is empty or attention maps are missing
        NumericError: If the loss becomes non-finite
    """
    if not dataset:
        raise ValueError("Training dataset is empty")
    channels = dataset[0].hr.shape[2]
    if cfg.mode is LossMode.YODA:
        missing = [pair.id for pair in dataset if attention is None or pair.id not in attention]
        if missing:
            raise ValueError(f"Attention maps missing for: {missing}")
    schedule = make_linear_schedule(cfg.T_train, cfg.beta_start, cfg.beta_end)
    upsampled = [bicubic_resize(p.lr, p.hr.shape[0], p.hr.shape[1]) for p in dataset]
    mask_schedules = (
        [MaskSchedule(attention[p.id], cfg.T_train, cfg.lower_bound) for p in dataset]
        if cfg.mode is LossMode.YODA
        else None
    )

    model = TinyDenoiser(channels=channels, hidden=cfg.hidden, seed=cfg.seed)
    optimizer = AdamW(cfg.learning_rate, cfg.weight_decay)
    rng = RngStream(cfg.seed)
    logger.info(
        "training_started",
        mode=cfg.mode.value,
        images=len(dataset),
        iterations=cfg.iterations,
        batch=cfg.batch_size,
        parameters=model.parameter_count,
    )
    logger.warning(
        "loss_normalized_by_active_pixels",
        detail="masked L1 is divided by the active-pixel count, not left as a raw sum",
    )

    rows = []
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        for iteration in tqdm(range(cfg.iterations), disable=not cfg.progress, desc="train"):
            items = []
            steps = []
            for index in rng.integers(0, len(dataset), size=cfg.batch_size):
                pair = dataset[int(index)]
                t = int(rng.integers(1, cfg.T_train + 1))
                gamma_t = schedule.gamma(t)
                z_t, eps = forward_sample(pair.hr, gamma_t, rng)
                if mask_schedules is None:
                    mask = np.ones(pair.hr.shape[:2], dtype=bool)
                else:
                    mask = mask_at(mask_schedules[int(index)], t)
                items.append(_BatchItem(upsampled[int(index)], z_t, eps, gamma_t, mask))
                steps.append(t)

            results = list(pool.map(lambda item: _item_gradients(model, item), items))
            losses = [loss for loss, _ in results]
            grads = {
                name: sum(g[name] for _, g in results) / len(results) for name in PARAMETER_ORDER
            }
            loss = float(np.mean(losses))
            if not np.isfinite(loss):
                raise NumericError(f"Training loss became non-finite at iteration {iteration}")
            optimizer.step(model, grads)
            rows.append({
                "iteration": iteration,
                "loss": loss,
                "mean_t": float(np.mean(steps)),
                "active_fraction": float(np.mean([item.mask.mean() for item in items])),
            })
            logger.debug("training_iteration", iteration=iteration, loss=loss)

    log = pd.DataFrame(rows, columns=["iteration", "loss", "mean_t", "active_fraction"])
    logger.info("training_finished", final_loss=rows[-1]["loss"])
    return TrainResult(model=model, loss_log=log)
