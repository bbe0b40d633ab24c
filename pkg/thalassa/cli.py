# thalassa/cli.py - Command-line workbench (click)

"""
Usage:
    python -m thalassa [--config config.yaml] [--set section.field=value ...] COMMAND [ARGS]

Commands: eof-build, simulate, invert, sweep, baselines, train-alpha, report.
Exit codes: 0 success, 1 user error (bad config, input or usage), 2 internal
or numerical failure.
"""

import logging
import sys
from typing import List, Optional, Tuple

import click
from loguru import logger

from thalassa.commands import (
    SWEEP_AXES,
    cmd_baselines,
    cmd_eof_build,
    cmd_invert,
    cmd_report,
    cmd_simulate,
    cmd_sweep,
    cmd_train_alpha,
)
from thalassa.config import DEFAULT_CONFIG_PATH, ExperimentConfig, LoggingSection, load_config
from thalassa.errors import ThalassaError


# --- LOGGING SETUP ---

class InterceptHandler(logging.Handler):
    """Route stdlib logging records (joblib, matplotlib, torch) into loguru"""

    def emit(self, record):
        try:
            level = logger.level(record.levelname).name
        except ValueError:
            level = record.levelno

        frame, depth = logging.currentframe(), 2
        while frame and frame.f_code.co_filename == logging.__file__:
            frame = frame.f_back
            depth += 1

        logger.opt(depth=depth, exception=record.exc_info).log(level, record.getMessage())


def configure_logging(settings: LoggingSection) -> None:
    logger.remove()
    # resolve sys.stderr at write time so redirected streams (tests, pipes) are honoured
    logger.add(lambda message: sys.stderr.write(message), level=settings.level.upper(), format=settings.format)
    logging.basicConfig(handlers=[InterceptHandler()], level=logging.WARNING, force=True)


# --- CLICK GROUP ---

class ThalassaGroup(click.Group):
    """click group mapping every failure to the documented exit codes"""

    def main(self, args=None, prog_name=None, complete_var=None, standalone_mode=True, **extra):
        try:
            rv = super().main(args, prog_name, complete_var, standalone_mode=False, **extra)
            code = rv if isinstance(rv, int) else 0
        except click.exceptions.Exit as e:
            code = e.exit_code
        except click.ClickException as e:
            e.show()
            code = 1
        except click.Abort:
            click.echo("Aborted!", err=True)
            code = 1
        except ThalassaError as e:
            logger.error(f"❌ {type(e).__name__}: {e}")
            code = e.exit_code
        except Exception as e:
            logger.exception(f"❌ Internal error: {e}")
            code = 2
        if standalone_mode:
            sys.exit(code)
        return code


def _overrides(sets: Tuple[str, ...], seed: Optional[int], output_dir: Optional[str],
               n_jobs: Optional[int], log_level: Optional[str]) -> List[str]:
    items = list(sets)
    if seed is not None:
        items.append(f"seed={seed}")
    if output_dir is not None:
        items.append(f"output_dir={output_dir}")
    if n_jobs is not None:
        items.append(f"performance.n_jobs={n_jobs}")
    if log_level is not None:
        items.append(f"observability.logging.level={log_level}")
    return items


@click.group(cls=ThalassaGroup)
@click.option("--config", "-c", "config_path", default=DEFAULT_CONFIG_PATH, show_default=True,
              type=click.Path(dir_okay=False), help="Experiment configuration (YAML)")
@click.option("--set", "sets", multiple=True, metavar="SECTION.FIELD=VALUE",
              help="Override one configuration field (repeatable)")
@click.option("--seed", type=int, default=None, help="Master seed")
@click.option("--output-dir", type=click.Path(file_okay=False), default=None, help="Output directory")
@click.option("--n-jobs", type=int, default=None, help="Parallel workers")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              default=None)
@click.pass_context
def cli(ctx, config_path, sets, seed, output_dir, n_jobs, log_level):
    """Sound speed profile inversion from multibeam travel times."""
    config = load_config(config_path, _overrides(sets, seed, output_dir, n_jobs, log_level))
    configure_logging(config.observability.logging)
    ctx.obj = config


@cli.command("eof-build")
@click.pass_obj
def eof_build(config: ExperimentConfig):
    """Build the EOF basis from the training profiles."""
    result = cmd_eof_build(config)
    for row in zip(range(1, result.summary["n_eof"] + 1), result.summary["sigma"], result.summary["explained_variance"]):
        click.echo(f"EOF {row[0]}: sigma={row[1]:.4f} m/s, explained={100 * row[2]:.2f}%")


@cli.command("simulate")
@click.option("--profile", default=None, help="Test profile index or id (default: first)")
@click.pass_obj
def simulate(config: ExperimentConfig, profile: Optional[str]):
    """Simulate noisy travel times over one test profile."""
    result = cmd_simulate(config, profile)
    click.echo(f"{result.summary['n_obs']} observations written to {result.out_dir}")


@cli.command("invert")
@click.argument("measurements", type=click.Path(dir_okay=False))
@click.option("--truth", type=click.Path(dir_okay=False), default=None, help="True profile CSV for scoring")
@click.pass_obj
def invert(config: ExperimentConfig, measurements: str, truth: Optional[str]):
    """Invert a measurement CSV (with its JSON sidecar)."""
    result = cmd_invert(config, measurements, truth)
    line = f"alpha={result.summary['selected_alpha']:.3g} misfit={result.summary['misfit']:.3e}"
    if "rms_error" in result.summary:
        line += f" rms_error={result.summary['rms_error']:.4f} m/s"
    click.echo(line)


@cli.command("sweep")
@click.option("--axis", required=True, type=click.Choice(SWEEP_AXES), help="Parameter axis")
@click.argument("values", nargs=-1, required=True, type=float)
@click.pass_obj
def sweep_cmd(config: ExperimentConfig, axis: str, values: Tuple[float, ...]):
    """Invert every test profile for each VALUES of one parameter axis."""
    result = cmd_sweep(config, axis, list(values))
    for point in result.summary["points"]:
        click.echo(f"{axis}={point['value']:g}: mean RMS error {point['mean_rms_error']:.3f} m/s")


@cli.command("baselines")
@click.pass_obj
def baselines(config: ExperimentConfig):
    """Mean-profile baseline errors on the test set."""
    result = cmd_baselines(config)
    click.echo(f"train mean: {result.summary['train_mean_rms_error']:.3f} m/s, "
               f"test mean: {result.summary['test_mean_rms_error']:.3f} m/s")


@cli.command("train-alpha")
@click.pass_obj
def train_alpha(config: ExperimentConfig):
    """Train the alpha-selection network on synthetic inversions."""
    result = cmd_train_alpha(config)
    click.echo(f"val MSE {result.summary['val_loss']:.4f} (label variance {result.summary['val_label_variance']:.4f})")


@cli.command("report")
@click.argument("sweep_dir", type=click.Path(file_okay=False))
@click.pass_obj
def report(config: ExperimentConfig, sweep_dir: str):
    """Re-render figures and a text summary from a sweep output directory."""
    result = cmd_report(config, sweep_dir)
    click.echo(f"report written to {result.out_dir}")


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
