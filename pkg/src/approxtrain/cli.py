#!/usr/bin/env python3
"""
Command-line interface for approxtrain.
"""

import json
import logging
import sys
from pathlib import Path
from typing import Optional, Tuple

import click
from rich.table import Table

from . import __version__
from .config import ApproxTrainConfig, ConfigError, ConfigLoader
from .errors import ApproxTrainError
from .log_setup import configure_logging, stderr_console

logger = logging.getLogger("approxtrain.cli")

EXIT_RUNTIME = 1
EXIT_CONFIG = 2

CONFIG_FILE = "config.toml"
LOG_FILE = "train.log"


def print_version(ctx, param, value):
    """Print version and exit."""
    if not value or ctx.resilient_parsing:
        return
    click.echo(__version__)
    ctx.exit()


def parse_shape(ctx, param, value):
    """Parse a comma-separated tensor shape such as ``3,3,64,64``."""
    try:
        shape = tuple(int(part) for part in value.split(","))
    except ValueError:
        raise click.BadParameter(f"Invalid shape: {value}")
    if not shape or any(d < 1 for d in shape):
        raise click.BadParameter(f"Shape dimensions must be positive: {value}")
    return shape


def fail(error: Exception) -> None:
    """Report an error on stderr and exit with its code."""
    code = EXIT_CONFIG if isinstance(error, ConfigError) else EXIT_RUNTIME
    click.echo(f"Error: {error}", err=True)
    sys.exit(code)


def load_config(
    config_path: str,
    seed: int,
    switch_epoch: Optional[int] = None,
) -> ApproxTrainConfig:
    """Load a config file and apply command-line overrides."""
    base = ConfigLoader.load(config_path)
    data = base.model_dump(mode="json")
    data["train"]["seed"] = seed
    if switch_epoch is not None:
        data["train"]["switch_epoch"] = switch_epoch
    return ConfigLoader.from_dict(data)


def _write_output(text: str, out: Optional[str]) -> None:
    if out is not None:
        path = Path(out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    click.echo(text, nl=False)


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Enable debug logging.")
@click.option(
    "--version",
    "-V",
    is_flag=True,
    callback=print_version,
    expose_value=False,
    is_eager=True,
    help="Show the version and exit.",
)
def main(verbose: bool) -> None:
    """
    approxtrain - CNN training with simulated approximate multipliers

    Examples:

        approxtrain calibrate --model drum --k 6 --seed 1

        approxtrain gen-noise --sd 0.045 --seed 1 --out hist.csv

        approxtrain train configs/desk_baseline.toml --seed 1 --out runs/base

        approxtrain eval runs/base/checkpoints/epoch_0030.ckpt

        approxtrain find-switch runs/noisy --baseline 0.8123

        approxtrain sweep configs/desk_sweep.toml --seed 1 --out runs/sweep
    """
    configure_logging(logging.DEBUG if verbose else logging.INFO)


@main.command()
@click.option(
    "--model",
    type=click.Choice(["exact", "drum", "truncate"]),
    default="drum",
    show_default=True,
    help="Multiplier model to profile.",
)
@click.option("--k", type=int, default=6, show_default=True, help="Kept bits per operand.")
@click.option(
    "--width", type=int, default=16, show_default=True, help="Operand width in bits."
)
@click.option(
    "--distribution",
    type=click.Choice(["uniform", "gaussian"]),
    default="uniform",
    show_default=True,
    help="Operand distribution for sampled profiling.",
)
@click.option(
    "--n", "samples", type=int, default=1_000_000, show_default=True, help="Sampled pairs."
)
@click.option("--exhaustive", is_flag=True, help="Enumerate every nonzero operand pair.")
@click.option("--seed", type=click.IntRange(min=0), required=True, help="Sampling seed.")
@click.option("--out", type=click.Path(dir_okay=False), help="Also write JSON here.")
def calibrate(
    model: str,
    k: int,
    width: int,
    distribution: str,
    samples: int,
    exhaustive: bool,
    seed: int,
    out: Optional[str],
) -> None:
    """Measure the relative-error profile of a multiplier model."""
    from .core.multipliers import MultiplierKind, MultiplierModel
    from .core.multipliers import calibrate as run_calibration

    try:
        multiplier = MultiplierModel(MultiplierKind(model), k=k, operand_width=width)
        profile = run_calibration(
            multiplier, n=samples, seed=seed, distribution=distribution, exhaustive=exhaustive
        )
    except (ApproxTrainError, ValueError) as e:
        fail(e)

    table = Table(title=f"{model} k={k} width={width}")
    table.add_column("MRE", justify="right")
    table.add_column("SD", justify="right")
    table.add_column("mean signed", justify="right")
    table.add_column("pairs", justify="right")
    table.add_row(
        f"{profile.mre:.4%}",
        f"{profile.sd:.4%}",
        f"{profile.mean_signed:+.4%}",
        f"{profile.sample_count:,}",
    )
    stderr_console.print(table)
    _write_output(json.dumps(profile.to_json_dict(multiplier), sort_keys=True) + "\n", out)


@main.command("gen-noise")
@click.option("--sd", type=float, required=True, help="Target SD of the relative error.")
@click.option(
    "--shape",
    default="3,3,64,64",
    show_default=True,
    callback=parse_shape,
    help="Matrix shape, comma separated.",
)
@click.option("--seed", type=click.IntRange(min=0), required=True, help="Noise seed.")
@click.option("--bins", type=click.IntRange(min=1), default=500, show_default=True)
@click.option("--allow-extreme", is_flag=True, help="Permit sd >= 0.5.")
@click.option("--out", type=click.Path(dir_okay=False), help="Also write CSV here.")
def gen_noise(
    sd: float,
    shape: Tuple[int, ...],
    seed: int,
    bins: int,
    allow_extreme: bool,
    out: Optional[str],
) -> None:
    """Generate one error matrix and print its histogram as CSV."""
    from .core.metrics import format_csv_row
    from .core.noise import NoiseSpec, error_histogram, generate_error_matrix, matrix_stats

    try:
        spec = NoiseSpec(sd_target=sd, seed=seed, allow_extreme=allow_extreme)
    except ValueError as e:
        fail(ConfigError("sd", str(e)))

    matrix = generate_error_matrix(shape, spec, layer_id=0)
    stats = matrix_stats(matrix)
    logger.info(
        "%d entries: MRE=%.4f%% SD=%.4f%% (expected MRE %.4f%%)",
        stats.size,
        100 * stats.mre,
        100 * stats.sd,
        100 * spec.implied_mre,
    )
    centers, counts = error_histogram(matrix, bins)
    lines = [format_csv_row(["bin_center", "count"])]
    lines.extend(
        format_csv_row([f"{center:.6f}", str(int(count))])
        for center, count in zip(centers, counts)
    )
    _write_output("\n".join(lines) + "\n", out)


@main.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--seed", type=click.IntRange(min=0), required=True, help="Run seed.")
@click.option(
    "--out",
    type=click.Path(file_okay=False),
    required=True,
    help="Run directory (metrics, checkpoints, log).",
)
@click.option(
    "--switch-epoch",
    type=click.IntRange(min=0),
    help="Switch to exact multipliers after this epoch.",
)
@click.option(
    "--resume",
    "resume_path",
    type=click.Path(dir_okay=False, exists=True),
    help="Continue from this checkpoint instead of a fresh initialization.",
)
def train(
    config_path: str,
    seed: int,
    out: str,
    switch_epoch: Optional[int],
    resume_path: Optional[str],
) -> None:
    """Train a network as described by CONFIG_PATH."""
    from .core.checkpoint import load_checkpoint
    from .core.data import prepare_data
    from .core.manifest import RunManifest
    from .core.training import train as run_training

    try:
        config = load_config(config_path, seed, switch_epoch)
        run_dir = Path(out)
        run_dir.mkdir(parents=True, exist_ok=True)
        configure_logging(logger.getEffectiveLevel(), log_file=run_dir / LOG_FILE)
        ConfigLoader.save(config, run_dir / CONFIG_FILE)

        resume = load_checkpoint(Path(resume_path)) if resume_path else None
        data = prepare_data(config.train.data, seed)
        result = run_training(config, data, run_dir=run_dir, resume=resume)

        manifest = RunManifest.for_config(config, run_dir)
        manifest.collect()
        manifest.write()
    except (ApproxTrainError, OSError) as e:
        fail(e)

    click.echo(f"accuracy={result.history.final_test_acc:.4f}")


@main.command("eval")
@click.argument("checkpoint_path", type=click.Path(dir_okay=False))
@click.option(
    "--data-dir",
    type=click.Path(file_okay=False),
    help="Dataset directory (defaults to the one recorded in the checkpoint).",
)
def eval_command(checkpoint_path: str, data_dir: Optional[str]) -> None:
    """Evaluate a checkpoint on its test split."""
    from .core.checkpoint import load_checkpoint
    from .core.data import load_raw, normalize
    from .core.training import evaluate

    try:
        ckpt = load_checkpoint(Path(checkpoint_path))
        config = ConfigLoader.from_dict(ckpt.config)
        data_cfg = config.train.data
        if data_dir is not None:
            data_cfg = data_cfg.model_copy(update={"path": data_dir})
        _, test = load_raw(data_cfg, config.train.seed or 0)
        test, _ = normalize(test, ckpt.stats)
        accuracy = evaluate(ckpt.network(), test, config.train.eval_batch_size)
    except (ApproxTrainError, OSError) as e:
        fail(e)

    click.echo(f"accuracy={accuracy:.4f}")


@main.command("find-switch")
@click.argument("run_dir", type=click.Path(file_okay=False, exists=True))
@click.option("--target", type=float, help="Required final accuracy (fraction).")
@click.option(
    "--baseline",
    type=float,
    help="Exact-run accuracy; the target becomes baseline minus --margin.",
)
@click.option("--margin", type=float, help="Defaults to sweep.target_margin.")
@click.option(
    "--coarse-step",
    type=click.IntRange(min=0),
    help="Grid spacing in epochs (0 = epochs // 10).",
)
def find_switch(
    run_dir: str,
    target: Optional[float],
    baseline: Optional[float],
    margin: Optional[float],
    coarse_step: Optional[int],
) -> None:
    """Find the latest switch epoch for a completed noisy run in RUN_DIR."""
    from .core.checkpoint import CheckpointStore
    from .core.data import prepare_data
    from .core.metrics import HybridRow, append_hybrid_row, format_csv_row
    from .core.noise import HALF_NORMAL_RATIO
    from .core.sweep import HYBRID_SUMMARY_FILE
    from .core.switch_search import default_target, find_switch_epoch

    if (target is None) == (baseline is None):
        raise click.UsageError("Give exactly one of --target or --baseline.")

    root = Path(run_dir)
    try:
        config = ConfigLoader.load(root / CONFIG_FILE)
        if config.train.seed is None:
            raise ConfigError("train.seed", "the run directory config has no seed")
        if target is None:
            target = default_target(
                baseline, config.sweep.target_margin if margin is None else margin
            )
        step = config.sweep.coarse_step if coarse_step is None else coarse_step
        data = prepare_data(config.train.data, config.train.seed)
        result = find_switch_epoch(
            config, data, target, CheckpointStore(root / "checkpoints"), coarse_step=step
        )
        row = HybridRow(
            mre=config.train.noise.sd_target * HALF_NORMAL_RATIO,
            approx_epochs=result.switch_epoch,
            exact_epochs=result.exact_epochs,
        )
        append_hybrid_row(row, root / HYBRID_SUMMARY_FILE)
    except (ApproxTrainError, OSError, ValueError) as e:
        fail(e)

    click.echo(format_csv_row(row.cells()))


@main.command()
@click.argument("config_path", type=click.Path(dir_okay=False))
@click.option("--seed", type=click.IntRange(min=0), required=True, help="Base seed.")
@click.option("--out", type=click.Path(file_okay=False), required=True)
def sweep(config_path: str, seed: int, out: str) -> None:
    """Train every sd_target x seed point and summarize accuracy."""
    from .core.manifest import RunManifest
    from .core.metrics import HYBRID_HEADER, SWEEP_HEADER
    from .core.sweep import run_sweep

    try:
        config = load_config(config_path, seed)
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        configure_logging(logger.getEffectiveLevel(), log_file=out_dir / LOG_FILE)
        ConfigLoader.save(config, out_dir / CONFIG_FILE)
        report = run_sweep(config, out_dir, seed)
        manifest = RunManifest.for_config(config, out_dir)
        manifest.collect()
        manifest.write()
    except (ApproxTrainError, OSError) as e:
        fail(e)

    table = Table(title=f"Accuracy vs. multiplier error ({report.epochs} epochs)")
    for column in SWEEP_HEADER:
        table.add_column(column, justify="right")
    for row in report.sweep_rows:
        table.add_row(*row.cells())
    stderr_console.print(table)

    if report.hybrid_rows:
        hybrid = Table(title="Hybrid schedule")
        for column in HYBRID_HEADER:
            hybrid.add_column(column, justify="right")
        for hybrid_row in report.hybrid_rows:
            hybrid.add_row(*hybrid_row.cells())
        stderr_console.print(hybrid)

    click.echo(str(out_dir))


@main.command("init-config")
@click.argument("path", type=click.Path(dir_okay=False))
def init_config(path: str) -> None:
    """Write a commented default configuration to PATH."""
    target = Path(path)
    if target.exists():
        fail(ApproxTrainError(f"Refusing to overwrite {target}"))
    ConfigLoader.save_default_config(target)
    click.echo(str(target))


if __name__ == "__main__":
    main()
