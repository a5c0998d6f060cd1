r""" Matrix-valued state evolution of a symmetric AMP orbit.

For q groups with fractions c_a and a separable nonlinearity g,

.. math::
    \Sigma^t = \sum_b c_b \hat\Sigma^{t-1}_b, \qquad
    \hat\Sigma^t_a = E\{g(Z^t_a, Y_a, a, t) g(Z^t_a, Y_a, a, t)^T\},

with Z^t_a ~ N(0, Sigma^t) independent of Y_a ~ P_a. The expectations are
Monte Carlo averages computed in batches; batch b of group a at step t draws
from the stream SeedSequence(seed, spawn_key=(t, a, b)), so results do not
depend on the number of threads.
"""
import logging
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool

import numpy as np
import pandas as pd

from ..amp.orbit import group_moments
from ..exceptions import ConfigError, DimensionError, NumericalError

_logger = logging.getLogger(__name__)

DEFAULT_MC_SAMPLES = 1_000_000
DEFAULT_BATCH_SIZE = 100_000
NEGATIVE_EIG_TOL = 1e-8
CLIP_RELATIVE = 1e-12
EXPECTATION_STREAM = 1


def psd_sqrt(sigma):
    """ Symmetric square root of a PSD matrix.

    Eigenvalues below 1e-12 times the trace are set to zero.

    Raises
    ------
    NumericalError
        If an eigenvalue is below -1e-8 or the matrix is not finite.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise DimensionError("covariance must be square, got shape {}".format(sigma.shape))
    if not np.all(np.isfinite(sigma)):
        raise NumericalError("covariance has non-finite entries")
    sym = 0.5 * (sigma + sigma.T)
    eig, vec = np.linalg.eigh(sym)
    if eig[0] < -NEGATIVE_EIG_TOL:
        raise NumericalError("covariance is indefinite, smallest eigenvalue {:.3g}".format(eig[0]))
    if eig[0] < 0:
        _logger.warning("clipping negative eigenvalue %.3g of the covariance", float(eig[0]))
    cutoff = CLIP_RELATIVE * max(np.trace(sym), 0.0)
    eig = np.where(eig < cutoff, 0.0, eig)
    return (vec * np.sqrt(eig)) @ vec.T


class ConstantSideInfo(object):
    """ Y_a equal to a fixed vector. """
    def __init__(self, vector):
        self.vector = np.atleast_1d(np.asarray(vector, dtype=float))

    def __call__(self, count, rng):
        return np.tile(self.vector, (count, 1))


class RademacherSideInfo(object):
    """ Y_a with i.i.d. equiprobable +-1 coordinates. """
    def __init__(self, dim=1):
        self.dim = int(dim)

    def __call__(self, count, rng):
        return rng.choice([-1.0, 1.0], size=(count, self.dim))


class CoordinateSideInfo(object):
    """ Y_a zero except coordinate `index`, drawn from `law`.

    `law` is a `Prior` or a nonnegative float, read as the variance of a
    centred Gaussian.
    """
    def __init__(self, dim, index, law):
        self.dim = int(dim)
        self.index = int(index)
        self.law = law

    def __call__(self, count, rng):
        out = np.zeros((count, self.dim))
        if hasattr(self.law, 'sample'):
            out[:, self.index] = self.law.sample(count, rng)
        else:
            out[:, self.index] = np.sqrt(float(self.law)) * rng.standard_normal(count)
        return out


def side_info_from_config(config, dim):
    """ Sampler from ``{"kind": "rademacher" | "constant" | "gaussian", ...}``. """
    config = dict(config)
    kind = config.pop('kind', None)
    if kind == 'rademacher':
        return RademacherSideInfo(dim)
    if kind == 'constant':
        return ConstantSideInfo(config.get('value', np.zeros(dim)))
    if kind == 'gaussian':
        return CoordinateSideInfo(dim, config.get('index', 0), config.get('var', 1.0))
    raise ConfigError("unknown side information kind {!r}".format(kind))


@dataclass(frozen=True)
class GeneralSeState:
    """ Sigma^t with the per-group second moments it induces.

    `sigma_hat` has shape (q, q, q), entry a being Sigma-hat^t_a, and
    `stderr` its Monte Carlo standard error. `sigma_stderr` is the error of
    `sigma` carried over from the previous step.
    """
    t: int
    sigma: np.ndarray = field(repr=False)
    sigma_hat: np.ndarray = field(repr=False)
    group_fractions: np.ndarray = field(repr=False)
    stderr: np.ndarray = field(repr=False)
    sigma_stderr: np.ndarray = field(repr=False)


def _check_fractions(group_fractions):
    c = np.asarray(group_fractions, dtype=float)
    if c.ndim != 1 or np.any(c <= 0) or abs(c.sum() - 1.0) > 1e-12:
        raise ConfigError("group fractions must be positive and sum to one")
    return c


def _batch_sizes(mc_samples, batch_size):
    mc_samples, batch_size = int(mc_samples), int(batch_size)
    if mc_samples < 2 or batch_size < 1:
        raise ConfigError("need at least two Monte Carlo samples and a positive batch size")
    count = max(2, -(-mc_samples // batch_size))
    base, extra = divmod(mc_samples, count)
    return [base + (1 if b < extra else 0) for b in range(count)]


def _draw_side_info(sampler, count, rng, group):
    try:
        side = np.asarray(sampler(count, rng), dtype=float)
    except Exception as err:
        raise NumericalError("side information sampler of group {} failed: {}".format(
            group, err)) from err
    if side.ndim == 1:
        side = side[:, None]
    if side.shape[0] != count:
        raise DimensionError("sampler of group {} returned {} rows, expected {}".format(
            group, side.shape[0], count))
    return side


def monte_carlo(statistic, root, sampler, group, t, mc_samples, seed,
                batch_size=DEFAULT_BATCH_SIZE, pool=None, stream=()):
    """ Batched Monte Carlo mean of ``statistic(z, side)`` with z ~ N(0, root root^T).

    Parameters
    ----------
    statistic: callable
        Maps arrays z (k x q) and side (k x p) to k per-sample values of any
        trailing shape.
    root: ndarray
        Symmetric square root of the covariance of z.
    sampler: callable
        ``sampler(count, rng)`` returns `count` rows of side information.

    Returns
    -------
    tuple(ndarray, ndarray)
        Mean over all samples and its standard error across batches.
    """
    sizes = _batch_sizes(mc_samples, batch_size)
    q = root.shape[0]

    def run(batch):
        key = (int(t), int(group), batch) + tuple(stream)
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))
        z = rng.standard_normal((sizes[batch], q)) @ root
        side = _draw_side_info(sampler, sizes[batch], rng, group)
        return np.mean(np.asarray(statistic(z, side), dtype=float), axis=0)

    if pool is None:
        batch_means = [run(b) for b in range(len(sizes))]
    else:
        batch_means = pool.map(run, range(len(sizes)))
    batch_means = np.asarray(batch_means)
    weights = np.asarray(sizes, dtype=float) / np.sum(sizes)
    mean = np.tensordot(weights, batch_means, axes=1)
    stderr = np.std(batch_means, axis=0, ddof=1) / np.sqrt(len(sizes))
    return mean, stderr


def _outer(g, group, t):
    def statistic(z, side):
        values = np.asarray(g.value(z, side, np.full(len(z), group), t), dtype=float)
        if values.shape != z.shape:
            raise DimensionError("nonlinearity returned shape {}, expected {}".format(
                values.shape, z.shape))
        return values[:, :, None] * values[:, None, :]
    return statistic


def _make_pool(threads):
    return ThreadPool(int(threads)) if threads and int(threads) > 1 else None


def general_se_run(group_fractions, side_info_samplers, g, sigma_hat0, T,
                   mc_samples=DEFAULT_MC_SAMPLES, seed=0, batch_size=DEFAULT_BATCH_SIZE,
                   threads=None):
    """ Iterate the general state evolution for t = 1..T.

    Parameters
    ----------
    group_fractions: array_like(float)
        Positive c_a summing to one.
    side_info_samplers: list(callable)
        One sampler ``sampler(count, rng)`` of Y_a per group.
    g: Nonlinearity
        Separable map of the orbit.
    sigma_hat0: array_like(float)
        Initial second moments, shape (q, q, q).
    T: int
        Number of states to compute.
    mc_samples: int
        Monte Carlo draws per expectation (optional, default=1e6).
    seed: int
    batch_size: int
        Draws per batch; at least two batches are always used.
    threads: int (optional)
        Worker threads for the batches.

    Returns
    -------
    list(GeneralSeState)
        States t = 1..T.
    """
    c = _check_fractions(group_fractions)
    q = len(c)
    if len(side_info_samplers) != q:
        raise DimensionError("need one side information sampler per group")
    prev_hat = np.asarray(sigma_hat0, dtype=float)
    if prev_hat.shape != (q, q, q):
        raise DimensionError("sigma_hat0 has shape {}, expected {}".format(prev_hat.shape, (q, q, q)))
    for a in range(q):
        psd_sqrt(prev_hat[a])
    prev_stderr = np.zeros_like(prev_hat)

    states = []
    pool = _make_pool(threads)
    try:
        for t in range(1, int(T) + 1):
            sigma = np.tensordot(c, prev_hat, axes=1)
            sigma_stderr = np.sqrt(np.tensordot(c ** 2, prev_stderr ** 2, axes=1))
            root = psd_sqrt(sigma)
            hats = np.empty((q, q, q))
            errs = np.empty((q, q, q))
            for a in range(q):
                hats[a], errs[a] = monte_carlo(_outer(g, a, t), root, side_info_samplers[a], a, t,
                                               mc_samples, seed, batch_size, pool)
            states.append(GeneralSeState(t=t, sigma=sigma, sigma_hat=hats, group_fractions=c,
                                         stderr=errs, sigma_stderr=sigma_stderr))
            _logger.debug("general SE t=%d, diag(Sigma) = %s", t, np.diag(sigma))
            prev_hat, prev_stderr = hats, errs
    finally:
        if pool is not None:
            pool.close()
            pool.join()
    return states


def expectation(state, group, func, sampler, mc_samples=DEFAULT_MC_SAMPLES, seed=0,
                batch_size=DEFAULT_BATCH_SIZE):
    """ E func(Z^t_a, Y_a) for Z^t_a ~ N(0, Sigma^t) and Y_a from `sampler`.

    Returns
    -------
    tuple(ndarray, ndarray)
        Mean and standard error.
    """
    root = psd_sqrt(state.sigma)
    return monte_carlo(func, root, sampler, group, state.t, mc_samples, seed, batch_size,
                       stream=(EXPECTATION_STREAM,))


def empirical_sigma_hat(instance):
    """ Per-group (1/|C_a|) sum_i g(x^0_i, y_i, a, 0) g(...)^T of an instance. """
    x0 = np.asarray(instance.initial, dtype=float)
    values = instance.nonlinearity.value(x0, instance.side_info, instance.groups, 0)
    return group_moments(values, instance.groups, instance.q)


def initial_sigma_hat(g, initial_rows, side_info_samplers, mc_samples=DEFAULT_MC_SAMPLES,
                      seed=0, batch_size=DEFAULT_BATCH_SIZE):
    """ Limit of the empirical initial moments when x^0 is constant per group.

    Parameters
    ----------
    initial_rows: array_like(float)
        q x q array, row a the value of x^0_i on group a.

    Returns
    -------
    tuple(ndarray, ndarray)
        Moments (q, q, q) and their standard errors.
    """
    initial_rows = np.asarray(initial_rows, dtype=float)
    q = initial_rows.shape[0]
    if initial_rows.shape != (q, q) or len(side_info_samplers) != q:
        raise DimensionError("initial rows must be q x q with one sampler per group")
    hats = np.empty((q, q, q))
    errs = np.empty((q, q, q))
    zero_root = np.zeros((q, q))
    for a in range(q):
        x0 = initial_rows[a]

        def statistic(z, side, a=a, x0=x0):
            values = np.asarray(g.value(z + x0, side, np.full(len(z), a), 0), dtype=float)
            return values[:, :, None] * values[:, None, :]

        hats[a], errs[a] = monte_carlo(statistic, zero_root, side_info_samplers[a], a, 0,
                                       mc_samples, seed, batch_size)
    return hats, errs


def sigma_frame(states):
    """ Long-format rows ``t, kind, index, value`` with kind ``sigma_diag``.

    Same layout as `schedule_frame`, one row per diagonal entry of Sigma^t.
    """
    records = [{'t': state.t, 'kind': 'sigma_diag', 'index': index, 'value': value}
               for state in states for index, value in enumerate(np.diag(state.sigma))]
    return pd.DataFrame.from_records(records, columns=['t', 'kind', 'index', 'value'])
