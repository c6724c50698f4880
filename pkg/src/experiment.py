"""End-to-end comparison of masked (YODA) and full training plus sampling.

``run_experiment`` ingests a dataset, caches attention maps, writes mask
statistics, trains one model per loss mode under identical seeds, samples the
held-out split with the matching sampler and scores everything (bicubic
upsampling included as a reference row).

Output directory layout::

    attention/<id>.ymap        cached HR attention maps (+ .sha256 sidecars)
    mask_stats.csv             t, active_fraction (mean over all images)
    mask_ratio.csv             id, diffused_pixel_ratio
    loss_<mode>.csv            training loss log
    model_<mode>.ymdl          trained weights
    sr_<mode>/<id>.png         super-resolved held-out images
    eval.csv                   per-image metrics for every mode
    regional_<mode>.csv        pooled per-attention-bin analysis
    summary.csv                one row per mode
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from src.attention import Aggregation, ExtractorConfig
from src.attention_cache import precompute_attention
from src.core_types import AttentionMap, DataError, ImageTensor
from src.dataset import SRPair, ingest, save_image
from src.denoiser_net import TinyDenoiser, save_model
from src.diffusion import baseline_sample
from src.guided_sampler import GuidedConfig, yoda_sample
from src.logger import get_logger
from src.masking import DEFAULT_LOWER_BOUND, MaskSchedule, diffused_pixel_ratio, mean_coverage
from src.metrics import format_frame, merge_regional, regional_analysis, regional_frame, score_image
from src.reports import write_csv
from src.resample import bicubic_resize
from src.rng import RngStream
from src.schedule import (
    DEFAULT_BETA_END,
    DEFAULT_BETA_START,
    NoiseSchedule,
    make_linear_schedule,
    respace_schedule,
)
from src.training import LossMode, TrainConfig, train

logger = get_logger(__name__)

VALID_SCALES = (2, 4, 8)
BICUBIC = "bicubic"
SUMMARY_COLUMNS = (
    "mode",
    "images",
    "psnr",
    "ssim",
    "color_shift",
    "loss_first_decile",
    "loss_last_decile",
    "diffused_pixel_ratio",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of one experiment run."""

    data_dir: Path
    output_dir: Path
    scale: int = 4
    extractors: tuple[ExtractorConfig, ...] = (ExtractorConfig(),)
    aggregation: Aggregation = Aggregation.MAX
    T_train: int = 100
    T_eval: int = 100
    lower_bound: float = DEFAULT_LOWER_BOUND
    train_seed: int = 0
    sample_seed: int = 1
    modes: tuple[LossMode, ...] = (LossMode.YODA, LossMode.FULL)
    iterations: int = 300
    batch_size: int = 2
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    hidden: int = 32
    beta_start: float = DEFAULT_BETA_START
    beta_end: float = DEFAULT_BETA_END
    holdout_fraction: float = 0.25
    workers: int = 1
    progress: bool = False

    def __post_init__(self):
        object.__setattr__(self, "data_dir", Path(self.data_dir))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        object.__setattr__(self, "aggregation", Aggregation(self.aggregation))
        object.__setattr__(self, "modes", tuple(LossMode(m) for m in self.modes))
        object.__setattr__(self, "extractors", tuple(self.extractors))
        if self.scale not in VALID_SCALES:
            raise ValueError(f"Scale must be one of {VALID_SCALES}, got {self.scale}")
        if not 1 <= self.T_eval <= self.T_train:
            raise ValueError(f"Need 1 <= T_eval <= T_train, got {self.T_eval} and {self.T_train}")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError(f"holdout_fraction must be in (0, 1), got {self.holdout_fraction}")
        if not self.modes or not self.extractors:
            raise ValueError("At least one mode and one extractor are required")
        if not self.data_dir.is_dir():
            raise DataError(f"Data directory not found: {self.data_dir}")

    @property
    def cache_dir(self) -> Path:
        return self.output_dir / "attention"

    def train_config(self, mode: LossMode) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            batch_size=self.batch_size,
            iterations=self.iterations,
            T_train=self.T_train,
            lower_bound=self.lower_bound,
            seed=self.train_seed,
            mode=mode,
            beta_start=self.beta_start,
            beta_end=self.beta_end,
            hidden=self.hidden,
            workers=self.workers,
            progress=self.progress,
        )


@dataclass
class ExperimentReport:
    """Numeric results plus the paths of every written artifact."""

    summary: pd.DataFrame
    evaluation: pd.DataFrame
    files: dict[str, Path] = field(default_factory=dict)


def split_holdout(pairs: list[SRPair], fraction: float) -> tuple[list[SRPair], list[SRPair]]:
    """Last ``fraction`` of the (sorted) pairs are held out, at least one each side.

    Raises:
        DataError: If fewer than two pairs are available
    """
    if len(pairs) < 2:
        raise DataError(f"Need at least 2 images for a train/held-out split, got {len(pairs)}")
    held_out = min(max(1, round(len(pairs) * fraction)), len(pairs) - 1)
    return pairs[:-held_out], pairs[-held_out:]


def decile_means(losses: pd.Series) -> tuple[float, float]:
    """Mean of the first and the last tenth of a loss log."""
    k = max(1, len(losses) // 10)
    return float(losses.iloc[:k].mean()), float(losses.iloc[-k:].mean())


def sample_image(
    model: TinyDenoiser,
    pair: SRPair,
    attention: AttentionMap,
    mode: LossMode,
    schedule: NoiseSchedule,
    lower_bound: float,
    rng: RngStream,
) -> ImageTensor:
    """Guided sampling for yoda, plain reverse diffusion for full."""
    if mode is LossMode.YODA:
        guided = GuidedConfig(schedule, MaskSchedule(attention, schedule.T, lower_bound))
        return yoda_sample(model, pair.lr, guided, rng).image
    x_up = bicubic_resize(pair.lr, pair.hr.shape[0], pair.hr.shape[1])
    return baseline_sample(model, x_up, schedule, rng)


def _mean_metric(rows: list[dict], key: str) -> float:
    return float(np.mean([row[key] for row in rows])) if rows else float("nan")


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Train, sample and score every configured mode.

    The eval CSV is flushed with whatever rows exist if a later stage fails.

    Raises:
        DataError: On unusable input data
        NumericError: If training or sampling diverges
    """
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, Path] = {}
    logger.info("experiment_started", data=str(cfg.data_dir), output=str(out))

    pairs = ingest(cfg.data_dir, cfg.scale)
    train_pairs, test_pairs = split_holdout(pairs, cfg.holdout_fraction)
    cache = precompute_attention(
        pairs, cfg.extractors, cfg.aggregation, cfg.cache_dir, workers=cfg.workers
    )

    mask_schedules = {
        p.id: MaskSchedule(cache.maps[p.id], cfg.T_eval, cfg.lower_bound) for p in pairs
    }
    coverage = pd.DataFrame(
        mean_coverage(list(mask_schedules.values())), columns=["t", "active_fraction"]
    )
    files["mask_stats"] = write_csv(coverage, out / "mask_stats.csv")
    ratios = pd.DataFrame({
        "id": list(mask_schedules),
        "diffused_pixel_ratio": [diffused_pixel_ratio(s) for s in mask_schedules.values()],
    })
    files["mask_ratio"] = write_csv(ratios, out / "mask_ratio.csv")

    schedule = respace_schedule(
        make_linear_schedule(cfg.T_train, cfg.beta_start, cfg.beta_end), cfg.T_eval
    )
    rows: list[dict] = []
    summary_rows: list[dict] = []
    regional: dict[str, list] = {}
    try:
        bicubic_rows = []
        for pair in test_pairs:
            x_up = bicubic_resize(pair.lr, pair.hr.shape[0], pair.hr.shape[1])
            bicubic_rows.append({"mode": BICUBIC, **score_image(pair.hr, x_up, pair.id)})
            regional.setdefault(BICUBIC, []).append(
                regional_analysis(pair.hr, x_up, cache.maps[pair.id])
            )
        rows.extend(bicubic_rows)
        summary_rows.append(_summary_row(BICUBIC, bicubic_rows, None, None))

        for mode in cfg.modes:
            result = train(cfg.train_config(mode), train_pairs, cache.maps)
            name = mode.value
            files[f"loss_{name}"] = write_csv(result.loss_log, out / f"loss_{name}.csv")
            files[f"model_{name}"] = save_model(result.model, out / f"model_{name}.ymdl")

            root = RngStream(cfg.sample_seed)

            def sample_one(indexed: tuple[int, SRPair], model=result.model, mode=mode):
                index, pair = indexed
                return sample_image(
                    model, pair, cache.maps[pair.id], mode, schedule, cfg.lower_bound,
                    root.fork(index),
                )

            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                images = list(pool.map(sample_one, enumerate(test_pairs)))

            mode_rows = []
            for pair, sr in zip(test_pairs, images):
                save_image(sr, out / f"sr_{mode.value}" / f"{pair.id}.png")
                mode_rows.append({"mode": mode.value, **score_image(pair.hr, sr, pair.id)})
                regional.setdefault(mode.value, []).append(
                    regional_analysis(pair.hr, sr, cache.maps[pair.id])
                )
            rows.extend(mode_rows)
            ratio = (
                float(np.mean([diffused_pixel_ratio(mask_schedules[p.id]) for p in test_pairs]))
                if mode is LossMode.YODA
                else 1.0
            )
            summary_rows.append(_summary_row(mode.value, mode_rows, result.loss_log, ratio))
            logger.info("mode_evaluated", mode=mode.value, psnr=_mean_metric(mode_rows, "psnr"))
    except Exception as e:
        logger.error("experiment_aborted", error=str(e), rows_flushed=len(rows))
        raise
    finally:
        if rows:
            files["eval"] = write_csv(format_frame(pd.DataFrame(rows)), out / "eval.csv")

    for name, reports in regional.items():
        files[f"regional_{name}"] = write_csv(
            regional_frame(merge_regional(reports)), out / f"regional_{name}.csv"
        )
    summary = pd.DataFrame(summary_rows, columns=list(SUMMARY_COLUMNS))
    files["summary"] = write_csv(format_frame(summary, SUMMARY_COLUMNS[2:]), out / "summary.csv")
    logger.info("experiment_finished", output=str(out), modes=[m.value for m in cfg.modes])
    return ExperimentReport(summary=summary, evaluation=pd.DataFrame(rows), files=files)


def _summary_row(
    mode: str,
    rows: list[dict],
    loss_log: pd.DataFrame | None,
    ratio: float | None,
) -> dict:
    first, last = decile_means(loss_log["loss"]) if loss_log is not None else (None, None)
    return {
        "mode": mode,
        "images": len(rows),
        "psnr": _mean_metric(rows, "psnr"),
        "ssim": _mean_metric(rows, "ssim"),
        "color_shift": _mean_metric(rows, "shift_summary"),
        "loss_first_decile": first,
        "loss_last_decile": last,
        "diffused_pixel_ratio": ratio,
    }

