""" The ``amp-se`` command line.

Exit status is 0 when every tolerance gate passes, 1 when a gate fails and 2
on a configuration or numerical error.
"""
import logging
import sys

import click

from . import __version__
from .exceptions import AmpSeError
from .harness import config_hash, load_config, run_experiment

_logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_ERROR = 2

CHECK_KINDS = {'embed': 'embed_check', 'se': 'general_se_check'}


def _overrides(func):
    func = click.option('--threads', type=int, default=None, help='worker threads or processes')(func)
    func = click.option('--out', type=click.Path(), default=None, help='path of the main CSV output')(func)
    func = click.option('--trials', type=int, default=None, help='number of trials')(func)
    func = click.option('--seed', type=int, default=None, help='base seed, trial k uses seed + k')(func)
    return click.argument('cfg_path', type=click.Path(exists=True, dir_okay=False))(func)


def _load(cfg_path, kind=None, seed=None, trials=None, out=None, threads=None):
    config = load_config(cfg_path)
    return config.replace(kind=kind, seed=seed, trials=trials, output=out,
                          threads=threads).validate()


def _execute(cfg_path, **kwargs):
    try:
        outcome = run_experiment(_load(cfg_path, **kwargs))
    except AmpSeError as err:
        _logger.error("%s: %s", type(err).__name__, err)
        sys.exit(EXIT_ERROR)
    for path in outcome.outputs:
        click.echo(str(path))
    if not outcome.passed:
        _logger.error("%s experiment %s failed its tolerance gates", outcome.kind,
                      outcome.config_hash)
        sys.exit(EXIT_FAILED)
    sys.exit(EXIT_OK)


@click.group()
@click.option('--quiet', 'log_level', flag_value=logging.WARNING, default=True)
@click.option('-v', '--verbose', 'log_level', flag_value=logging.INFO)
@click.option('-vv', '--very-verbose', 'log_level', flag_value=logging.DEBUG)
@click.version_option(__version__)
def cli(log_level: int):
    logging.basicConfig(stream=sys.stdout,
                        level=log_level,
                        datefmt='%Y-%m-%d %H:%M',
                        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')


@cli.command()
@_overrides
def run(cfg_path, seed, trials, out, threads):
    """ Run the experiment described in CFG_PATH. """
    _execute(cfg_path, seed=seed, trials=trials, out=out, threads=threads)


@cli.command()
@_overrides
def sweep(cfg_path, seed, trials, out, threads):
    """ Sweep delta and locate the critical undersampling ratio. """
    _execute(cfg_path, kind='sweep', seed=seed, trials=trials, out=out, threads=threads)


@cli.command()
@click.argument('which', type=click.Choice(sorted(CHECK_KINDS)))
@_overrides
def check(which, cfg_path, seed, trials, out, threads):
    """ Run the embedding (embed) or general state evolution (se) checks. """
    _execute(cfg_path, kind=CHECK_KINDS[which], seed=seed, trials=trials, out=out,
             threads=threads)


@cli.command()
@click.argument('cfg_path', type=click.Path(exists=True, dir_okay=False))
def validate(cfg_path):
    """ Load and validate CFG_PATH without running it. """
    try:
        config = load_config(cfg_path)
    except AmpSeError as err:
        _logger.error("%s: %s", type(err).__name__, err)
        sys.exit(EXIT_ERROR)
    click.echo("{} experiment, hash {}".format(config.kind, config_hash(config)))


if __name__ == '__main__':
    cli()
