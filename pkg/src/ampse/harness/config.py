""" Experiment configuration.

An experiment is described by a YAML mapping that loads into
`ExperimentConfig`. Nested sections map to their own dataclasses; unknown
keys are rejected so that typos do not silently fall back to defaults.
"""
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field

from ..ensemble import CouplingMatrix, EnsembleSpec
from ..exceptions import AmpSeError, ConfigError
from ..io import read_yaml
from ..priors import DEFAULT_ATOL, DEFAULT_NODES, DEFAULT_RTOL, Prior

_logger = logging.getLogger(__name__)

KINDS = ('cs_mc', 'se_only', 'sweep', 'embed_check', 'general_se_check')


def _coerce(value, kind, name):
    # YAML reads 1e-4 as a string, numbers are converted explicitly
    try:
        if kind is float:
            return float(value)
        if kind is int:
            number = float(value)
            if number != int(number):
                raise ValueError("not an integer")
            return int(number)
        if kind is bool:
            if not isinstance(value, bool):
                raise ValueError("not a boolean")
            return value
        if kind is str:
            return str(value)
        if isinstance(kind, type) and issubclass(kind, _Section) and isinstance(value, dict):
            return kind.from_dict(value)
    except (TypeError, ValueError) as err:
        raise ConfigError("field {!r}: cannot read {!r} as {}: {}".format(
            name, value, kind.__name__, err))
    return value


class _Section(object):
    """ Mixin giving dataclasses type coercion and strict dict loading. """
    def __post_init__(self):
        for f in dataclasses.fields(self):
            object.__setattr__(self, f.name, _coerce(getattr(self, f.name), f.type, f.name))

    @classmethod
    def from_dict(cls, data):
        if data is None:
            return cls()
        if not isinstance(data, dict):
            raise ConfigError("section {} must be a mapping".format(cls.__name__))
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError("unknown keys in {}: {}".format(cls.__name__, sorted(unknown)))
        return cls(**data)


@dataclass(frozen=True)
class QuadratureConfig(_Section):
    nodes: int = DEFAULT_NODES
    rtol: float = DEFAULT_RTOL
    atol: float = DEFAULT_ATOL

    def kwargs(self):
        return {'nodes': self.nodes, 'rtol': self.rtol, 'atol': self.atol}


@dataclass(frozen=True)
class Tolerances(_Section):
    """ Acceptance gates. `sigma` counts cross-trial standard deviations. """
    rel: float = 0.10
    sigma: float = 3.0
    t1_rel: float = 0.05
    embed: float = 1e-6
    diagonal: float = 0.02


@dataclass(frozen=True)
class SweepConfig(_Section):
    deltas: list = field(default_factory=list)
    threshold: float = 1e-4
    bisect_lo: float = 0.02
    bisect_hi: float = 1.0
    bisect_tol: float = 1e-3
    max_iterations: int = 2000
    stop_tol: float = 1e-10
    compare_iid: bool = False
    gap: float = 0.1
    mc_deltas: list = field(default_factory=list)

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, 'deltas', [_coerce(d, float, 'deltas') for d in self.deltas])
        object.__setattr__(self, 'mc_deltas', [_coerce(d, float, 'mc_deltas') for d in self.mc_deltas])


@dataclass(frozen=True)
class GeneralConfig(_Section):
    """ Symmetric orbit checked against the general state evolution. """
    N: int = 2000
    group_fractions: list = field(default_factory=lambda: [1.0])
    nonlinearity: dict = field(default_factory=lambda: {'name': 'tanh', 'scale': 0.8, 'side': 1.0})
    side_info: list = field(default_factory=lambda: [{'kind': 'rademacher'}])
    initial: list = field(default_factory=lambda: [[1.0]])
    mc_samples: int = 1_000_000
    test_functions: list = field(default_factory=lambda: ['x', 'x2', 'abs'])
    check_orbit: bool = True
    check_diagonal: bool = True
    diagonal_iterations: int = 6

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, 'group_fractions',
                           [_coerce(c, float, 'group_fractions') for c in self.group_fractions])


@dataclass(frozen=True)
class ExperimentConfig(_Section):
    """ One experiment.

    Parameters
    ----------
    kind: str
        One of cs_mc, se_only, sweep, embed_check, general_se_check.
    prior: dict
        Prior fragment, see `Prior.from_config`.
    coupling: dict
        Coupling fragment, see `CouplingMatrix.from_config`.
    m0, n0: int
        Block sizes; delta = m0 / n0.
    trials: int
        Number of trials; trial k uses seed ``seed + k``.
    output: str
        Path of the main CSV file; companions share its stem.
    """
    kind: str = 'cs_mc'
    prior: dict = field(default_factory=lambda: {'gaussian': {'mean': 0.0, 'var': 1.0}})
    coupling: dict = field(default_factory=lambda: {'rows': [[1.0]]})
    m0: int = 500
    n0: int = 1000
    noise_var: float = 0.0
    iterations: int = 10
    trials: int = 1
    seed: int = 0
    output: str = 'results.csv'
    threads: int = 1
    max_entries: int = 200_000_000
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)
    tolerances: Tolerances = field(default_factory=Tolerances)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    general: GeneralConfig = field(default_factory=GeneralConfig)

    def to_dict(self):
        return dataclasses.asdict(self)

    def replace(self, **changes):
        """ Copy with the non-None `changes` applied. """
        changes = {k: v for k, v in changes.items() if v is not None}
        return dataclasses.replace(self, **changes)

    @property
    def delta(self):
        return self.m0 / self.n0

    def build_prior(self):
        return Prior.from_config(self.prior)

    def build_coupling(self):
        return CouplingMatrix.from_config(self.coupling)

    def ensemble_spec(self):
        return EnsembleSpec(self.build_coupling(), self.m0, self.n0)

    def validate(self):
        """ Check every field and build the prior and the coupling once.

        Raises
        ------
        ConfigError
        """
        if self.kind not in KINDS:
            raise ConfigError("unknown experiment kind {!r}, choose from {}".format(self.kind, KINDS))
        for name in ('m0', 'n0', 'iterations', 'trials', 'threads', 'max_entries'):
            if getattr(self, name) < 1:
                raise ConfigError("{} must be at least 1".format(name))
        if self.noise_var < 0:
            raise ConfigError("noise_var must be nonnegative")
        if self.kind == 'sweep' and not (self.sweep.deltas or self.sweep.compare_iid):
            raise ConfigError("a sweep needs a delta grid")
        if any(d <= 0 for d in self.sweep.deltas + self.sweep.mc_deltas):
            raise ConfigError("sweep deltas must be positive")
        if not 0 < self.sweep.bisect_lo < self.sweep.bisect_hi:
            raise ConfigError("need 0 < bisect_lo < bisect_hi")
        if self.sweep.gap < 0:
            raise ConfigError("sweep gap must be nonnegative")
        general = self.general
        q = len(general.group_fractions)
        if len(general.side_info) != q or len(general.initial) != q:
            raise ConfigError("general section needs one side_info and initial row per group")
        try:
            self.build_prior()
            self.ensemble_spec()
        except AmpSeError:
            raise
        except (TypeError, ValueError) as err:
            raise ConfigError(str(err))
        return self


def config_hash(config):
    """ First 12 hex digits of the SHA-256 of the canonical JSON of the config. """
    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:12]


def load_config(path):
    """ Read and validate an `ExperimentConfig` from a YAML file. """
    data = read_yaml(path)
    config = ExperimentConfig.from_dict(data).validate()
    _logger.info("loaded %s experiment from %s (hash %s)", config.kind, path, config_hash(config))
    return config
