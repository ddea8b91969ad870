"""Command-line interface for chaossync."""

import json
import logging
import sys
from contextlib import nullcontext

import click
from rich.console import Console
from tabulate import tabulate

from .models import POLICIES, VARIANTS
from .runner import SyncRunner, summarize_errors
import config


# Configure logging
logging.basicConfig(
    level=getattr(logging, config.LOG_LEVEL, logging.INFO),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

# Spinner and diagnostics on stderr keep stdout machine-readable
console = Console(stderr=True)


def spinner(message):
    """Status spinner on an interactive stderr, nothing otherwise."""
    return console.status(message) if console.is_terminal else nullcontext()


def run_options(func):
    """Flags shared by commands that run or check a config."""
    options = [
        click.option('--config', 'config_path', type=click.Path(dir_okay=False),
                     help='Run config (JSON); defaults to the built-in reference run'),
        click.option('--dt', type=float, help='Override integrator step size'),
        click.option('--t-end', 't_end', type=float, help='Override integration horizon'),
        click.option('--gain', type=float, help='Override error decay gain'),
        click.option('--policy', type=click.Choice(POLICIES), help='Override control split policy'),
        click.option('--variant', type=click.Choice(VARIANTS), help='Override scheme variant'),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def fail(result):
    """Print a failed result and exit with its code."""
    click.echo(f"❌ {result.get('error', 'Unknown error')}", err=True)
    for violation in result.get('violations', []):
        click.echo(f"   • {violation}", err=True)
    sys.exit(result.get('exit_code', config.EXIT_FAILURE))


def echo_json(result):
    click.echo(json.dumps(result, indent=2, default=str))


@click.group()
@click.option('--verbose', '-v', is_flag=True, help='Enable verbose logging')
@click.option('--quiet', '-q', is_flag=True, help='Suppress non-error output')
def main(verbose, quiet):
    """chaossync - multi-switching combination synchronization of chaotic systems"""
    if verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    elif quiet:
        logging.getLogger().setLevel(logging.ERROR)


@main.command()
@run_options
@click.option('--out', type=click.Path(file_okay=False), help='Output directory')
@click.option('--format', type=click.Choice(['table', 'json']), default='table', help='Output format')
def simulate(config_path, dt, t_end, gain, policy, variant, out, format):
    """Integrate the closed loop and write the trace and report CSVs."""
    runner = SyncRunner()
    with spinner("Integrating closed loop..."):
        result = runner.simulate(config_path, dt=dt, t_end=t_end, gain=gain, policy=policy,
                                 variant=variant, out=out)
    if not result['success']:
        if format == 'json':
            echo_json(result)
        fail(result)

    if format == 'json':
        echo_json(result)
        return

    click.echo(f"✅ Simulation finished ({result['variant']}, policy {result['policy']}, "
               f"{result['samples']} snapshots)")
    for path in result['paths']:
        click.echo(f"   📄 {path}")
    click.echo(tabulate(summarize_errors(result), headers=['Error', 'e(0)', 'e(t_end)', 'Settled at'],
                        tablefmt='grid'))
    click.echo(f"Final |e|: {result['final_error_norm']:.3e}   "
               f"max decay residual: {result['max_decay_residual']:.3e}   "
               f"V monotone: {'yes' if result['lyapunov_monotone'] else 'no'}")


@main.command(name='reproduce-paper')
@click.option('--out', type=click.Path(file_okay=False), help='Output directory')
def reproduce_paper(out):
    """Run the Genesio-Tesi/Lu reference experiment and write figure CSVs."""
    runner = SyncRunner()
    with spinner("Running reference experiment..."):
        result = runner.reproduce(out)
    if not result['success']:
        fail(result)

    click.echo(f"✅ Reference experiment written to {result['output_dir']}")
    for path in result['paths']:
        click.echo(f"   📄 {path}")
    click.echo(f"Final |e|: {result['final_error_norm']:.3e}   "
               f"max decay residual: {result['max_decay_residual']:.3e}")


@main.command()
@run_options
@click.option('--format', type=click.Choice(['table', 'json']), default='table', help='Output format')
def validate(config_path, dt, t_end, gain, policy, variant, format):
    """Check a config's assignment and scaling without running it."""
    runner = SyncRunner()
    result = runner.validate(config_path, dt=dt, t_end=t_end, gain=gain, policy=policy, variant=variant)

    if format == 'json':
        echo_json(result)
        if not result['success']:
            sys.exit(result['exit_code'])
        return

    if 'slots' not in result:
        fail(result)

    rows = [[f"block{s['block']}", s['slot'], s['tuple'], s['pattern'], '✓' if s['switching'] else '✗']
            for s in result['slots']]
    click.echo(tabulate(rows, headers=['Block', 'Slot', 'Tuple', 'Pattern', 'Switching'], tablefmt='grid'))
    for warning in result['warnings']:
        click.echo(f"⚠️  {warning}")
    if not result['success']:
        fail(result)
    click.echo("ok")


@main.command(name='enumerate-patterns')
@click.argument('n', type=int)
@click.option('--format', type=click.Choice(['table', 'json']), default='table', help='Output format')
def enumerate_patterns(n, format):
    """Count index tuples in {1..N}^4 by equality pattern."""
    result = SyncRunner().enumerate(n)
    if not result['success']:
        fail(result)

    if format == 'json':
        echo_json(result)
        return

    rows = [[c['pattern'], c['family'], c['count']] for c in result['classes']]
    click.echo(tabulate(rows, headers=['Pattern', 'Family', 'Tuples'], tablefmt='grid'))
    click.echo(f"{result['valid']} valid switching tuples of {result['total']}")


@main.command()
@click.argument('configs', nargs=-1, required=True, type=click.Path(dir_okay=False))
@click.option('--out', type=click.Path(file_okay=False), help='Parent output directory')
@click.option('--workers', type=int, help='Worker processes (default: CPU count)')
@click.option('--dt', type=float, help='Override integrator step size')
@click.option('--t-end', 't_end', type=float, help='Override integration horizon')
@click.option('--gain', type=float, help='Override error decay gain')
@click.option('--policy', type=click.Choice(POLICIES), help='Override control split policy')
@click.option('--variant', type=click.Choice(VARIANTS), help='Override scheme variant')
def sweep(configs, out, workers, dt, t_end, gain, policy, variant):
    """Run several configs concurrently, one output directory each."""
    runner = SyncRunner()
    with spinner(f"Sweeping {len(configs)} config(s)..."):
        result = runner.sweep(configs, out=out, workers=workers, dt=dt, t_end=t_end, gain=gain,
                              policy=policy, variant=variant)

    if result['results']:
        rows = []
        for run in result['results']:
            status = "✅ ok" if run['success'] else f"❌ {run['error']}"
            norm = f"{run['final_error_norm']:.3e}" if run['success'] else '-'
            rows.append([run['config'], status, norm, run['exit_code']])
        click.echo(tabulate(rows, headers=['Config', 'Status', 'Final |e|', 'Exit'], tablefmt='grid'))
    if not result['success']:
        fail(result)


@main.command()
def version():
    """Show version information."""
    from . import __version__
    click.echo(f"chaossync v{__version__}")
    click.echo("Dual combination-combination multi-switching synchronization")


if __name__ == '__main__':
    main()
