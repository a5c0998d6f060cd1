""" Coupling matrices and the block-variance Gaussian sensing ensemble.

A coupling matrix `W` (L_r x L_c, nonnegative, roughly row-stochastic) and two
block sizes m0, n0 define the ensemble M(W, m0, n0): an m x n matrix with
m = m0 L_r, n = n0 L_c, whose entry (i, j) is N(0, W[g(i), g(j)] / m0), where
g maps a row (column) index to its contiguous row (column) group.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, NumericalError

_logger = logging.getLogger(__name__)

ROW_SUM_BOUNDS = (0.5, 2.0)
DEFAULT_MAX_ENTRIES = 200_000_000


@dataclass(frozen=True)
class CouplingReport:
    """ Outcome of `validate_coupling`.

    `bad_rows` lists rows whose sum leaves [1/2, 2], `empty_columns` lists
    columns without a positive entry, `messages` holds readable descriptions.
    """
    bad_rows: tuple = ()
    empty_columns: tuple = ()
    messages: tuple = ()

    @property
    def ok(self):
        return not self.bad_rows and not self.empty_columns

    def __bool__(self):
        return self.ok


class CouplingMatrix(object):
    """ Nonnegative L_r x L_c variance profile W of a spatially coupled ensemble.

    Parameters
    ----------
    entries: array_like(float)
        Two dimensional array of nonnegative finite numbers.

    Raises
    ------
    ConfigError
        If the entries are not a finite nonnegative 2-D array, or the matrix
        fails `validate_coupling`.
    """
    def __init__(self, entries):
        entries = np.array(entries, dtype=float, ndmin=2)
        if entries.ndim != 2 or entries.size == 0:
            raise ConfigError("coupling matrix must be a non-empty 2-D array")
        if not np.all(np.isfinite(entries)) or np.any(entries < 0):
            raise ConfigError("coupling entries must be finite and nonnegative")
        entries.setflags(write=False)
        self.entries = entries
        report = validate_coupling(self)
        if not report.ok:
            raise ConfigError("invalid coupling matrix: " + "; ".join(report.messages))

    @property
    def Lr(self):
        return self.entries.shape[0]

    @property
    def Lc(self):
        return self.entries.shape[1]

    @property
    def shape(self):
        return self.entries.shape

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)

    def __eq__(self, other):
        if not isinstance(other, CouplingMatrix):
            return NotImplemented
        return np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash(self.entries.tobytes())

    def __repr__(self):
        return "CouplingMatrix({!r})".format(self.entries.tolist())

    @classmethod
    def from_config(cls, config):
        """ Build W from ``{"rows": [[...], ...]}``, ``{"band": {...}}`` or
        ``{"sc": {"omega": ..., "Lambda": ...}}``.
        """
        if not isinstance(config, dict):
            raise ConfigError("coupling config must be a mapping, got {!r}".format(config))
        if 'band' in config:
            band = dict(config['band'])
            try:
                return band_coupling(band['Lr'], band['Lc'], band['profile'])
            except KeyError as err:
                raise ConfigError("band coupling needs key {}".format(err))
        if 'sc' in config:
            sc = dict(config['sc'])
            try:
                return sc_coupling(sc['omega'], sc['Lambda'])
            except KeyError as err:
                raise ConfigError("sc coupling needs key {}".format(err))
        if 'rows' in config:
            W = cls(config['rows'])
            for key, size in (('Lr', W.Lr), ('Lc', W.Lc)):
                if key in config and int(config[key]) != size:
                    raise ConfigError("{} = {} does not match rows".format(key, config[key]))
            return W
        raise ConfigError("coupling config needs one of 'rows', 'band', 'sc'")

    def to_config(self):
        return {'Lr': self.Lr, 'Lc': self.Lc, 'rows': self.entries.tolist()}


def validate_coupling(W):
    """ Check rough row-stochasticity and column support of W.

    Parameters
    ----------
    W: CouplingMatrix or array_like(float)

    Returns
    -------
    CouplingReport
        Truthy iff every row sum lies in [1/2, 2] and every column has a
        strictly positive entry.
    """
    entries = np.asarray(W, dtype=float)
    low, high = ROW_SUM_BOUNDS
    sums = entries.sum(axis=1)
    bad_rows = tuple(int(r) for r in np.flatnonzero((sums < low) | (sums > high)))
    empty = tuple(int(c) for c in np.flatnonzero(~np.any(entries > 0, axis=0)))
    messages = ["row {} sum {:.6g} outside [1/2, 2]".format(r, sums[r]) for r in bad_rows]
    messages += ["column {} has no positive entry".format(c) for c in empty]
    return CouplingReport(bad_rows=bad_rows, empty_columns=empty, messages=tuple(messages))


def band_coupling(Lr, Lc, profile):
    """ Band coupling with entries depending only on |r - c|, rows normalized.

    Parameters
    ----------
    Lr, Lc: int
        Number of row and column groups.
    profile: list(float)
        profile[k] is the weight on the k-th diagonal (|r - c| = k).

    Returns
    -------
    CouplingMatrix
        Row-stochastic matrix.
    """
    Lr, Lc = int(Lr), int(Lc)
    profile = np.asarray(profile, dtype=float)
    if Lr < 1 or Lc < 1:
        raise ConfigError("Lr and Lc must be positive")
    if profile.ndim != 1 or len(profile) == 0 or len(profile) > max(Lr, Lc):
        raise ConfigError("profile length must be in [1, max(Lr, Lc)]")
    if np.any(profile < 0) or not np.any(profile > 0):
        raise ConfigError("profile must be nonnegative and not all zero")
    lag = np.abs(np.arange(Lr)[:, None] - np.arange(Lc)[None, :])
    entries = np.where(lag < len(profile), profile[np.minimum(lag, len(profile) - 1)], 0.0)
    return CouplingMatrix(_normalize_rows(entries))


def sc_coupling(omega, Lambda):
    """ Seeded band coupling: column c supported on rows c, ..., c + omega - 1.

    Has L_c = Lambda column groups and L_r = Lambda + omega - 1 row groups;
    rows are normalized to sum to one, so the boundary columns collect more
    weight than the bulk.
    """
    omega, Lambda = int(omega), int(Lambda)
    if omega < 1 or Lambda < 1:
        raise ConfigError("omega and Lambda must be positive")
    entries = np.zeros((Lambda + omega - 1, Lambda))
    for c in range(Lambda):
        entries[c:c + omega, c] = 1.0
    return CouplingMatrix(_normalize_rows(entries))


def _normalize_rows(entries):
    sums = entries.sum(axis=1, keepdims=True)
    if np.any(sums == 0):
        raise ConfigError("coupling has an all-zero row")
    return entries / sums


@dataclass(frozen=True)
class EnsembleSpec:
    """ Parameters (W, m0, n0) of the ensemble M(W, m0, n0). """
    coupling: CouplingMatrix
    m0: int
    n0: int

    def __post_init__(self):
        if int(self.m0) < 1 or int(self.n0) < 1:
            raise ConfigError("m0 and n0 must be positive integers")

    @property
    def m(self):
        return self.m0 * self.coupling.Lr

    @property
    def n(self):
        return self.n0 * self.coupling.Lc

    @property
    def delta(self):
        """ Undersampling parameter m0 / n0 of the state evolution. """
        return self.m0 / self.n0

    def row_groups(self):
        return np.repeat(np.arange(self.coupling.Lr), self.m0)

    def col_groups(self):
        return np.repeat(np.arange(self.coupling.Lc), self.n0)

    def row_slice(self, r):
        return slice(r * self.m0, (r + 1) * self.m0)

    def col_slice(self, c):
        return slice(c * self.n0, (c + 1) * self.n0)


@dataclass(frozen=True)
class SensingMatrix:
    """ A draw from M(W, m0, n0); (spec, seed) is its canonical representation. """
    values: np.ndarray = field(repr=False)
    spec: EnsembleSpec
    seed: int

    @property
    def shape(self):
        return self.values.shape


def block_rng(seed, *key):
    """ Independent generator for the stream `key` of `seed`. """
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))


def sample_sensing_matrix(spec, seed, max_entries=DEFAULT_MAX_ENTRIES):
    """ Draw A ~ M(W, m0, n0).

    Every (r, c) block comes from its own random stream, so the values do not
    depend on the order in which blocks are generated.

    Parameters
    ----------
    spec: EnsembleSpec
    seed: int
    max_entries: int
        Largest admissible m * n (optional, default=2e8).

    Returns
    -------
    SensingMatrix

    Raises
    ------
    NumericalError
        If m * n exceeds `max_entries`.
    """
    if spec.m * spec.n > max_entries:
        raise NumericalError("sensing matrix {}x{} exceeds the cap of {} entries".format(
            spec.m, spec.n, max_entries))
    W = spec.coupling.entries
    values = np.zeros((spec.m, spec.n))
    for r in range(spec.coupling.Lr):
        for c in range(spec.coupling.Lc):
            if W[r, c] == 0:
                continue
            rng = block_rng(seed, r, c)
            block = rng.standard_normal((spec.m0, spec.n0))
            values[spec.row_slice(r), spec.col_slice(c)] = block * np.sqrt(W[r, c] / spec.m0)
    values.setflags(write=False)
    _logger.debug("sampled %dx%d sensing matrix with seed %d", spec.m, spec.n, seed)
    return SensingMatrix(values=values, spec=spec, seed=int(seed))


def sample_symmetric_matrix(N, seed):
    """ Draw A = G + G^T with G_ij i.i.d. N(0, 1 / (2N)).

    Off-diagonal entries are N(0, 1/N) and diagonal entries N(0, 2/N).
    """
    N = int(N)
    if N < 1:
        raise ConfigError("N must be positive")
    rng = np.random.default_rng(seed)
    G = rng.normal(scale=np.sqrt(1.0 / (2 * N)), size=(N, N))
    return G + G.T
