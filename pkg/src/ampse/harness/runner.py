""" Dispatch an experiment config to its runner. """
import logging

from ..exceptions import ConfigError
from .experiments import run_cs_monte_carlo, run_embed_check, run_general_se_check, run_se_only
from .sweep import run_delta_sweep

_logger = logging.getLogger(__name__)

RUNNERS = {
    'cs_mc': run_cs_monte_carlo,
    'se_only': run_se_only,
    'sweep': run_delta_sweep,
    'embed_check': run_embed_check,
    'general_se_check': run_general_se_check,
}


def run_experiment(config):
    """ Run `config` with the runner of its kind and return the `Outcome`. """
    try:
        runner = RUNNERS[config.kind]
    except KeyError:
        raise ConfigError("unknown experiment kind {!r}".format(config.kind))
    _logger.info("starting %s experiment, output %s", config.kind, config.output)
    outcome = runner(config)
    _logger.info("%s experiment %s: %s", config.kind, outcome.config_hash,
                 'passed' if outcome.passed else 'FAILED')
    return outcome
