"""Command line: one subcommand per experiment mode"""
import logging
import time
from pathlib import Path

import click

from . import create_lab
from .errors import ConfigError, LabError
from .harness import ExperimentRegistry, Mode, load_config
from .lib.parallel import configure_threads

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3


def run_mode(mode: Mode, config_path, out=None, seed=None, threads=None, dump_fields=False,
             resolution_scale=None, settings=None) -> int:
    """Load, run and write one experiment; returns the process exit code."""
    try:
        config = load_config(config_path, mode=mode, seed=seed, threads=threads,
                             resolution_scale=resolution_scale, dump_fields=True if dump_fields else None)
    except ConfigError as e:
        click.echo(f"Config error: {e.describe()}", err=True)
        return EXIT_CONFIG

    if config.threads is not None:
        configure_threads(config.threads)
    root = out or config.output_dir or (settings.OUTPUT_ROOT if settings is not None else 'runs')

    ExperimentRegistry.initialize_experiments()
    experiment = ExperimentRegistry.get(mode.value)
    start = time.time()
    try:
        result = experiment.run(config)
    except ConfigError as e:
        click.echo(f"Config error: {e.describe()}", err=True)
        return EXIT_CONFIG
    except LabError as e:
        logger.error(f"{mode.value} failed: {e}")
        click.echo(f"Error: {e}", err=True)
        return EXIT_FAILURE
    target = experiment.write(result, root, config.dump_fields)
    click.echo(f"{mode.value}: wrote {target} in {time.time() - start:.1f}s")
    if not result.converged:
        click.echo(f"{mode.value}: not converged", err=True)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


@click.group()
@click.option('--env', default=None, help="Settings profile (development, production, testing)")
@click.pass_context
def cli(ctx, env):
    """Lawrence-Doniach laboratory"""
    ctx.obj = create_lab(env)


def _add_mode(mode: Mode, summary: str):
    @cli.command(mode.value, help=summary)
    @click.option('--config', 'config_path', required=True, type=click.Path(exists=True, dir_okay=False),
                  help="Experiment config (JSON)")
    @click.option('--out', type=click.Path(file_okay=False), default=None, help="Output root directory")
    @click.option('--seed', type=click.IntRange(0, 2 ** 64 - 1), default=None)
    @click.option('--threads', type=click.IntRange(1), default=None)
    @click.option('--dump-fields', is_flag=True, default=False, help="Write field dumps")
    @click.option('--resolution-scale', type=float, default=None, help="Refine all grids by this factor")
    @click.pass_context
    def command(ctx, config_path, out, seed, threads, dump_fields, resolution_scale):
        code = run_mode(mode, Path(config_path), out, seed, threads, dump_fields, resolution_scale, ctx.obj)
        ctx.exit(code)
    return command


_add_mode(Mode.MINIMIZE_LD, "Minimize the Lawrence-Doniach energy")
_add_mode(Mode.MINIMIZE_LIMIT, "Minimize the limit functional")
_add_mode(Mode.RECOVER, "Build a recovery state for a smooth field")
_add_mode(Mode.GAMMA_SWEEP, "Run the (eps, s) sweep")
_add_mode(Mode.DIAGNOSE, "Recompute scalars from dumped fields")
_add_mode(Mode.APPROX_CHECK, "Run the mollification and reflection checks")
