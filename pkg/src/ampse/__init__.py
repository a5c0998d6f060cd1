# -*- coding: utf-8 -*-
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version('ampse')
except PackageNotFoundError:
    __version__ = 'unknown'
finally:
    del version, PackageNotFoundError

from . import amp, ensemble, priors, se
from .ensemble import CouplingMatrix, EnsembleSpec, band_coupling, sc_coupling
from .exceptions import (AmpSeError, ConfigError, DimensionError, DivergenceError,
                         NumericalError, QuadratureError)
from .priors import Prior
