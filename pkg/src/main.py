"""Command-line entry point.

Subcommands: synth, attention, mask-stats, train, sample, eval, experiment.
CSV goes to stdout (or --out), logs to stderr. Exit codes: 0 success,
1 usage error, 2 data error, 3 numeric failure.
"""

import sys
from pathlib import Path

import click
import pandas as pd

from src.attention import Aggregation, build_attention, parse_extractors, resample_map
from src.attention_cache import precompute_attention
from src.core_types import AttentionMap, DataError, ImageTensor, NumericError
from src.dataset import SRPair, ingest, load_image, save_image, save_mask, synth
from src.denoiser_net import load_model, save_model
from src.diffusion import baseline_sample
from src.experiment import run_experiment
from src.guided_sampler import DEFAULT_TRAJECTORY_POINTS, GuidedConfig, yoda_sample
from src.logger import configure_logging, get_logger
from src.map_io import SUFFIX, quantize_map, read_map
from src.masking import (
    DEFAULT_LOWER_BOUND,
    MaskSchedule,
    checkpoint_steps,
    diffused_pixel_ratio,
    mask_at,
    mean_coverage,
)
from src.metrics import format_frame, merge_regional, regional_analysis, regional_frame, score_image
from src.reports import FLOAT_FORMAT, write_csv
from src.resample import bicubic_resize
from src.rng import RngStream
from src.schedule import make_linear_schedule, respace_schedule
from src.settings import Settings, worker_count
from src.training import LossMode, TrainConfig, train

logger = get_logger(__name__)

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

SCALES = click.Choice(["2", "4", "8"])
MODES = click.Choice([m.value for m in LossMode])
AGGREGATIONS = click.Choice([a.value for a in Aggregation])


def _emit(frame: pd.DataFrame, out: Path | None) -> None:
    """Write CSV to ``out`` or stdout."""
    if out is not None:
        write_csv(frame, out)
        return
    click.echo(
        frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n"), nl=False
    )


def _progress(ctx: click.Context) -> bool:
    return not ctx.obj["quiet"] and sys.stderr.isatty()


def _dataset_attention(
    pairs: list[SRPair],
    spec: str,
    aggregation: str,
    cache: Path | None,
) -> dict[str, AttentionMap]:
    configs = parse_extractors(spec)
    if cache is not None:
        return precompute_attention(pairs, configs, aggregation, cache, worker_count()).maps
    return {
        p.id: build_attention(p.lr, p.hr.shape[:2], configs, aggregation, p.id) for p in pairs
    }


@click.group()
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    default="INFO",
    help="Log verbosity (logs go to stderr)",
)
@click.option("--quiet", is_flag=True, help="Disable progress bars")
@click.pass_context
def cli(ctx: click.Context, log_level: str, quiet: bool):
    """Attention-guided diffusion super-resolution at desk scale."""
    configure_logging(level=log_level)
    ctx.ensure_object(dict)
    ctx.obj["quiet"] = quiet


@cli.command("synth")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path))
@click.option("--count", default=8, show_default=True, help="Number of images")
@click.option("--size", default=32, show_default=True, help="Side length in pixels")
@click.option("--seed", default=0, show_default=True)
@click.option("--channels", type=click.Choice(["1", "3"]), default="3", show_default=True)
@click.option("--detail", default=6, show_default=True, help="Shapes drawn per image")
def synth_command(out_dir: Path, count: int, size: int, seed: int, channels: str, detail: int):
    """Write a synthetic PNG dataset."""
    paths = synth(out_dir, count, size=size, seed=seed, channels=int(channels), detail=detail)
    click.echo(f"wrote {len(paths)} images to {out_dir}")


@cli.command("attention")
@click.option("--data", "data_dir", required=True, type=click.Path(path_type=Path))
@click.option("--scale", type=SCALES, default="4", show_default=True)
@click.option("--attention", "spec", default="edge", show_default=True,
              help="Comma-separated extractors: gaussian, edge, sift, external:DIR")
@click.option("--aggregate", type=AGGREGATIONS, default="max", show_default=True)
@click.option("--cache", "cache_dir", required=True, type=click.Path(path_type=Path))
def attention_command(data_dir: Path, scale: str, spec: str, aggregate: str, cache_dir: Path):
    """Precompute HR attention maps for a dataset."""
    pairs = ingest(data_dir, int(scale))
    configs = parse_extractors(spec)
    report = precompute_attention(pairs, configs, aggregate, cache_dir, worker_count())
    click.echo(f"{len(report.maps)} maps in {cache_dir}: "
               f"{report.hits} cached, {report.extractions} extracted")


@cli.command("mask-stats")
@click.option("--map", "map_path", type=click.Path(path_type=Path, exists=True, dir_okay=False),
              help="Single .ymap file")
@click.option("--data", "data_dir", type=click.Path(path_type=Path), help="Dataset directory")
@click.option("--scale", type=SCALES, default="4", show_default=True)
@click.option("--attention", "spec", default="edge", show_default=True)
@click.option("--aggregate", type=AGGREGATIONS, default="max", show_default=True)
@click.option("--steps", default=100, show_default=True, help="Number of diffusion steps T")
@click.option("--lower-bound", default=DEFAULT_LOWER_BOUND, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), help="CSV path (default: stdout)")
@click.option("--save-masks", type=click.Path(path_type=Path), help="Write M(t) PNGs here")
@click.option("--checkpoints", default=DEFAULT_TRAJECTORY_POINTS, show_default=True)
def mask_stats_command(
    map_path: Path | None,
    data_dir: Path | None,
    scale: str,
    spec: str,
    aggregate: str,
    steps: int,
    lower_bound: float,
    out: Path | None,
    save_masks: Path | None,
    checkpoints: int,
):
    """Active-pixel fraction per step and the diffused pixel ratio."""
    if (map_path is None) == (data_dir is None):
        raise click.UsageError("Give exactly one of --map or --data")
    if map_path is not None:
        maps = {map_path.stem: read_map(map_path)}
    else:
        maps = _dataset_attention(ingest(data_dir, int(scale)), spec, aggregate, None)
    schedules = {key: MaskSchedule(a, steps, lower_bound) for key, a in maps.items()}
    coverage = pd.DataFrame(
        mean_coverage(list(schedules.values())), columns=["t", "active_fraction"]
    )
    _emit(coverage, out)
    ratio = sum(diffused_pixel_ratio(s) for s in schedules.values()) / len(schedules)
    click.echo(f"diffused_pixel_ratio={FLOAT_FORMAT % ratio}", err=out is None)

    if save_masks is not None:
        for key, schedule in schedules.items():
            for t in checkpoint_steps(steps, checkpoints):
                save_mask(mask_at(schedule, t), save_masks / f"{key}_t{t:04d}.png")


@cli.command("train")
@click.option("--data", "data_dir", required=True, type=click.Path(path_type=Path))
@click.option("--scale", type=SCALES, default="4", show_default=True)
@click.option("--attention", "spec", default="edge", show_default=True)
@click.option("--aggregate", type=AGGREGATIONS, default="max", show_default=True)
@click.option("--cache", "cache_dir", type=click.Path(path_type=Path),
              help="Attention cache directory")
@click.option("--mode", type=MODES, default="yoda", show_default=True)
@click.option("--iters", default=300, show_default=True)
@click.option("--batch", default=2, show_default=True)
@click.option("--lr", "learning_rate", default=1e-3, show_default=True)
@click.option("--weight-decay", default=1e-4, show_default=True)
@click.option("--steps", default=100, show_default=True, help="Training steps T_train")
@click.option("--lower-bound", default=DEFAULT_LOWER_BOUND, show_default=True)
@click.option("--hidden", default=32, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path), help="Model file (.ymdl)")
@click.option("--loss-log", type=click.Path(path_type=Path), help="Loss CSV path")
@click.pass_context
def train_command(
    ctx: click.Context,
    data_dir: Path,
    scale: str,
    spec: str,
    aggregate: str,
    cache_dir: Path | None,
    mode: str,
    iters: int,
    batch: int,
    learning_rate: float,
    weight_decay: float,
    steps: int,
    lower_bound: float,
    hidden: int,
    seed: int,
    out: Path,
    loss_log: Path | None,
):
    """Train a denoiser with the masked (yoda) or full loss."""
    cfg = TrainConfig(
        learning_rate=learning_rate,
        weight_decay=weight_decay,
        batch_size=batch,
        iterations=iters,
        T_train=steps,
        lower_bound=lower_bound,
        seed=seed,
        mode=mode,
        hidden=hidden,
        workers=worker_count(),
        progress=_progress(ctx),
    )
    pairs = ingest(data_dir, int(scale))
    maps = None
    if cfg.mode is LossMode.YODA:
        maps = _dataset_attention(pairs, spec, aggregate, cache_dir)
    result = train(cfg, pairs, maps)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(result.model, out)
    write_csv(result.loss_log, loss_log or out.with_suffix(".loss.csv"))
    click.echo(f"final loss {FLOAT_FORMAT % result.loss_log['loss'].iloc[-1]}, model {out}")


def _sampling_attention(
    spec: str, aggregate: str, lr: ImageTensor, hr_shape: tuple[int, int]
) -> AttentionMap:
    path = Path(spec)
    if path.suffix == SUFFIX and path.is_file():
        return quantize_map(resample_map(read_map(path), *hr_shape))
    return build_attention(lr, hr_shape, parse_extractors(spec), aggregate)


@cli.command("sample")
@click.option("--input", "input_path", required=True,
              type=click.Path(path_type=Path, exists=True, dir_okay=False), help="LR image")
@click.option("--model", "model_path", required=True,
              type=click.Path(path_type=Path, exists=True, dir_okay=False))
@click.option("--scale", type=SCALES, default="4", show_default=True)
@click.option("--attention", "spec", default="edge", show_default=True,
              help=".ymap path or extractor list")
@click.option("--aggregate", type=AGGREGATIONS, default="max", show_default=True)
@click.option("--mode", type=MODES, default="yoda", show_default=True,
              help="yoda: guided sampler, full: unguided baseline")
@click.option("--lower-bound", default=DEFAULT_LOWER_BOUND, show_default=True)
@click.option("--train-steps", default=100, show_default=True, help="T the model was trained with")
@click.option("--steps", type=int, help="Sampling steps (default: --train-steps)")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--save-trajectory", type=click.Path(path_type=Path),
              help="Write intermediate states and masks here")
@click.option("--trajectory-points", default=DEFAULT_TRAJECTORY_POINTS, show_default=True)
@click.option("--no-mask-input", is_flag=True, help="Feed the unmasked state to the denoiser")
@click.option("--shared-branch-noise", is_flag=True, help="Reuse SR noise for the LR branch")
def sample_command(
    input_path: Path,
    model_path: Path,
    scale: str,
    spec: str,
    aggregate: str,
    mode: str,
    lower_bound: float,
    train_steps: int,
    steps: int | None,
    seed: int,
    out: Path,
    save_trajectory: Path | None,
    trajectory_points: int,
    no_mask_input: bool,
    shared_branch_noise: bool,
):
    """Super-resolve one LR image."""
    model = load_model(model_path)
    lr = load_image(input_path)
    hr_shape = (lr.shape[0] * int(scale), lr.shape[1] * int(scale))
    schedule = respace_schedule(make_linear_schedule(train_steps), steps or train_steps)
    rng = RngStream(seed)
    if LossMode(mode) is LossMode.FULL:
        image = baseline_sample(model, bicubic_resize(lr, *hr_shape), schedule, rng)
        save_image(image, out)
        click.echo(f"wrote {out}")
        return

    attention = _sampling_attention(spec, aggregate, lr, hr_shape)
    cfg = GuidedConfig(
        schedule=schedule,
        mask_schedule=MaskSchedule(attention, schedule.T, lower_bound),
        mask_input=not no_mask_input,
        shared_branch_noise=shared_branch_noise,
        record_trajectory=save_trajectory is not None,
        trajectory_points=trajectory_points,
    )
    result = yoda_sample(model, lr, cfg, rng)
    save_image(result.image, out)
    for point in result.trajectory:
        save_image(point.state.clip(0.0, 1.0), save_trajectory / f"state_t{point.t:04d}.png")
        save_mask(point.mask, save_trajectory / f"mask_t{point.t:04d}.png")
    click.echo(f"wrote {out}")


@cli.command("eval")
@click.option("--hr", "hr_dir", required=True, type=click.Path(path_type=Path, file_okay=False))
@click.option("--sr", "sr_dir", required=True, type=click.Path(path_type=Path, file_okay=False))
@click.option("--attention", "map_dir", type=click.Path(path_type=Path, file_okay=False),
              help="Directory of <id>.ymap maps for the regional analysis")
@click.option("--regional", type=click.Path(path_type=Path), help="Regional CSV path")
@click.option("--ref-normalize", is_flag=True, help="Match SR channel means to HR first")
@click.option("--out", type=click.Path(path_type=Path), help="CSV path (default: stdout)")
def eval_command(
    hr_dir: Path,
    sr_dir: Path,
    map_dir: Path | None,
    regional: Path | None,
    ref_normalize: bool,
    out: Path | None,
):
    """Score SR images against HR images with matching file names."""
    if (map_dir is None) != (regional is None):
        raise click.UsageError("--attention and --regional must be given together")
    rows = []
    reports = []
    for hr_path in sorted(p for p in hr_dir.iterdir() if p.is_file()):
        sr_path = sr_dir / hr_path.name
        if not sr_path.exists():
            logger.warning("sr_image_missing", path=str(sr_path))
            continue
        hr, sr = load_image(hr_path), load_image(sr_path)
        rows.append(score_image(hr, sr, hr_path.name, ref_normalize=ref_normalize))
        if map_dir is not None:
            reports.append(regional_analysis(hr, sr, read_map(map_dir / f"{hr_path.stem}{SUFFIX}")))
    if not rows:
        raise DataError(f"No matching images between {hr_dir} and {sr_dir}")
    _emit(format_frame(pd.DataFrame(rows)), out)
    if reports:
        write_csv(regional_frame(merge_regional(reports)), regional)


@cli.command("experiment")
@click.option("--config", "config_path", default="yoda.json", show_default=True,
              type=click.Path(path_type=Path), help="Settings file: .json or key=value lines")
@click.option("--data", "data_dir", help="Overrides data_dir")
@click.option("--out", "output_dir", help="Overrides output_dir")
@click.option("--scale", type=int)
@click.option("--attention", "spec")
@click.option("--aggregate", type=AGGREGATIONS)
@click.option("--iters", type=int)
@click.option("--batch", type=int)
@click.option("--lr", "learning_rate", type=float)
@click.option("--steps", type=int, help="T_train")
@click.option("--eval-steps", type=int, help="T_eval")
@click.option("--lower-bound", type=float)
@click.option("--train-seed", type=int)
@click.option("--sample-seed", type=int)
@click.pass_context
def experiment_command(ctx: click.Context, config_path: Path, **flags):
    """Train and compare yoda and full modes, writing every report."""
    settings = Settings(config_path)
    settings.apply_overrides({
        "data_dir": flags["data_dir"],
        "output_dir": flags["output_dir"],
        "scale": flags["scale"],
        "attention.extractors": flags["spec"],
        "attention.aggregation": flags["aggregate"],
        "attention.lower_bound": flags["lower_bound"],
        "training.iterations": flags["iters"],
        "training.batch_size": flags["batch"],
        "training.learning_rate": flags["learning_rate"],
        "diffusion.T_train": flags["steps"],
        "diffusion.T_eval": flags["eval_steps"],
        "seeds.train": flags["train_seed"],
        "seeds.sample": flags["sample_seed"],
    })
    report = run_experiment(settings.to_experiment_config(progress=_progress(ctx)))
    _emit(format_frame(report.summary, report.summary.columns[2:]), None)


def main(argv: list[str] | None = None) -> int:
    """Run the CLI and map failures to exit codes."""
    try:
        cli.main(args=argv, prog_name="yoda", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("Aborted", err=True)
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except NumericError as e:
        logger.error("numeric_failure", error=str(e))
        return EXIT_NUMERIC
    except (DataError, OSError) as e:
        logger.error("data_error", error=str(e))
        return EXIT_DATA
    except (ValueError, KeyError) as e:
        logger.error("usage_error", error=str(e))
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
