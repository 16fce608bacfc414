#!/usr/bin/env python3
import sys
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path

import click
from meta_attn_lib.environment import enumerate_layouts
from meta_attn_lib.errors import ConfigurationError, ContractViolation, CsvParseError, NaNGradientError
from meta_attn_lib.gradcheck import TOLERANCE, run_gradcheck_suite
from meta_attn_lib.harness import EXPERIMENTS, parse_config, run_experiment, summarize
from meta_attn_lib.oracle import verify_oracle


now = datetime.now(timezone.utc)


@contextmanager
def reported_errors():
    try:
        yield
    except (AssertionError, ConfigurationError, ContractViolation, CsvParseError, NaNGradientError, OSError) as e:
        raise click.ClickException(str(e)) from e


@click.group()
def cli():
    """
    Trains attention meta-controllers over an oracle agent in the rooms gridworld
    """


@cli.command()
@click.option('--experiment', type=click.Choice(list(EXPERIMENTS)), help='Experiment to run')
@click.option('--episodes', type=int, help='Training episodes')
@click.option('--seed', type=int, help='Random seed')
@click.option('--lr', type=float, help='Adam learning rate')
@click.option('--batch', type=int, help='Episodes per update')
@click.option('--timeout', type=int, help='Meta-steps before an episode times out')
@click.option('--target-room', type=int, help='Position of the target room, 0 is the top')
@click.option('--baseline', type=click.Choice(['episode', 'step']), help='Baseline average')
@click.option(
    '--config',
    'config_path',
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help='key=value experiment file',
)
@click.option('--out', type=click.Path(dir_okay=False, path_type=Path), help='CSV output path')
@click.option('--checkpoint', type=click.Path(dir_okay=False, path_type=Path), help='Save parameters here')
@click.option(
    '--init-from',
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help='Initialize parameters from a checkpoint',
)
def run(config_path, **overrides):
    """
    Train one experiment and write per-episode metrics as CSV
    """

    print(f'---\n{now}\nStarting run')

    with reported_errors():
        spec = parse_config(config_path, overrides)
        run_experiment(spec)


@cli.command(name='summarize')
@click.option(
    '--in',
    'in_path',
    required=True,
    type=click.Path(exists=True, dir_okay=False, path_type=Path),
    help='Run CSV',
)
@click.option('--bucket', type=int, default=100, show_default=True, help='Episodes per bucket')
def summarize_(in_path, bucket):
    """
    Bucketed mean and variance of episode length, one line per bucket
    """

    print(f'---\n{now}\nStarting summarize {in_path}', file=sys.stderr)

    with reported_errors():
        buckets = summarize(in_path, bucket)

    print('first_episode,last_episode,count,mean_length,var_length')
    for b in buckets:
        print(f'{b.first_episode},{b.last_episode},{b.count},{b.mean_length:.4f},{b.var_length:.4f}')


@cli.command()
@click.option('--seeds', type=int, default=20, show_default=True, help='Seeds per check')
def gradcheck(seeds):
    """
    Compare analytic gradients of every layer and both networks with finite differences
    """

    print(f'---\n{now}\nStarting gradcheck, {seeds} seeds')

    results = run_gradcheck_suite(seeds)

    failed = [name for name, err in results.items() if not err < TOLERANCE]
    if failed:
        sys.exit(f'  gradient check failed: {", ".join(failed)}')

    print('  all gradient checks passed')


@cli.command(name='enumerate-layouts')
def enumerate_layouts_():
    """
    Print every valid room layout, one per line
    """

    for layout in enumerate_layouts():
        heights = ' '.join(str(h) for h in layout.heights)
        colors = ' '.join(c.name for c in layout.colors)
        print(f'{heights} {colors}')


@cli.command()
def check_oracle():
    """
    Exhaustively compare the oracle agent with BFS over all layouts, rows and subgoals
    """

    print(f'---\n{now}\nStarting check-oracle')

    try:
        checked = verify_oracle()
    except AssertionError as e:
        sys.exit(f'  oracle check failed: {e}')

    print(f'  oracle optimal on {checked} cases')


if __name__ == '__main__':
    cli()
