""" Reading experiment files and writing result tables. """
import logging
from pathlib import Path

import yaml

from .exceptions import ConfigError

_logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'


def read_yaml(path):
    """ Load a YAML mapping with `yaml.safe_load`.

    Raises
    ------
    ConfigError
        If the file is missing, unparsable or not a mapping.
    """
    path = Path(path)
    try:
        with path.open('r', encoding='utf-8') as f:
            data = yaml.safe_load(f)
    except OSError as err:
        raise ConfigError("cannot read {}: {}".format(path, err))
    except yaml.YAMLError as err:
        raise ConfigError("cannot parse {}: {}".format(path, err))
    if not isinstance(data, dict):
        raise ConfigError("{} does not hold a mapping".format(path))
    return data


class IO(object):
    """ Output location of one experiment.

    The main table goes to `path`; companion tables share its stem, e.g.
    ``results_summary.csv`` next to ``results.csv``.
    """
    def __init__(self, pathobj):
        if not isinstance(pathobj, Path):
            raise ConfigError("IO must be initialized with a Path object")
        self.path = pathobj

    def companion(self, suffix):
        return self.path.with_name("{}_{}{}".format(self.path.stem, suffix, self.path.suffix or '.csv'))

    def write(self, frame, suffix=None):
        """ Write a DataFrame as UTF-8 CSV without the index and return the path. """
        target = self.path if suffix is None else self.companion(suffix)
        target.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(target, index=False, float_format=FLOAT_FORMAT, encoding='utf-8',
                     lineterminator='\n')
        _logger.info("wrote %d rows to %s", len(frame), target)
        return target
