r""" Approximate message passing for compressed sensing with coupled matrices.

Given y = A x + w with A ~ M(W, m0, n0), the iteration is

.. math::
    x^{t+1} = \eta_t(x^t + (Q^t \odot A)^T r^t), \qquad
    r^t = y - A x^t + b^t \odot r^{t-1},

started from x^1 = E X and r^0 = 0. The matrices Q^t, the effective
signal-to-noise ratios of the denoisers and therefore all coefficients of the
iteration are read off a precomputed state evolution schedule.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..ensemble import block_rng, sample_sensing_matrix
from ..exceptions import ConfigError, DimensionError, DivergenceError, NumericalError

_logger = logging.getLogger(__name__)

SIGNAL_STREAM = 2 ** 32 - 1
NOISE_STREAM = 2 ** 32 - 2
DIVERGENCE_BOUND = 1e12


def compute_q(W, phi):
    """ Block weights Q_{r,u} = phi_r^{-1} / sum_k W_{k,u} phi_k^{-1}.

    Parameters
    ----------
    W: CouplingMatrix or array_like(float)
        L_r x L_c coupling matrix.
    phi: array_like(float)
        L_r positive finite values.

    Returns
    -------
    ndarray(float)
        L_r x L_c array with sum_r W_{r,u} Q_{r,u} = 1 for every column u.
        Entries on blocks where W vanishes are set to zero.
    """
    W = np.asarray(W, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (W.shape[0],):
        raise DimensionError("phi has shape {}, expected ({},)".format(phi.shape, W.shape[0]))
    if not np.all(np.isfinite(phi)) or np.any(phi <= 0):
        raise NumericalError("phi must be positive and finite")
    inv = 1.0 / phi
    denom = W.T @ inv
    if np.any(denom <= 0):
        raise NumericalError("zero denominator in Q, a column of W has no support")
    Q = inv[:, None] / denom[None, :]
    return np.where(W > 0, Q, 0.0)


def compute_onsager(W, q_prev, eta_prime_avgs, delta):
    """ Onsager coefficients (1/delta) sum_u W_{r,u} Q_{r,u} <eta'>_u, one per row group. """
    W = np.asarray(W, dtype=float)
    q_prev = np.asarray(q_prev, dtype=float)
    eta_prime_avgs = np.asarray(eta_prime_avgs, dtype=float)
    if q_prev.shape != W.shape:
        raise DimensionError("Q has shape {}, expected {}".format(q_prev.shape, W.shape))
    if eta_prime_avgs.shape != (W.shape[1],):
        raise DimensionError("need one derivative average per column group")
    if delta <= 0:
        raise ConfigError("delta must be positive")
    return (W * q_prev) @ eta_prime_avgs / delta


def effective_snr(W, phi):
    """ s_u = sum_r W_{r,u} / phi_r. """
    return np.asarray(W, dtype=float).T @ (1.0 / np.asarray(phi, dtype=float))


@dataclass(frozen=True)
class CsAmpState:
    """ Iterate t of compressed-sensing AMP.

    `effective` is the denoiser input x^t + (Q^t o A)^T r^t and `block_mse`
    the per-column-group squared error of `estimate` when the signal is known.
    """
    iteration: int
    estimate: np.ndarray = field(repr=False)
    residual: np.ndarray = field(repr=False)
    onsager: np.ndarray = field(repr=False)
    q_matrix: np.ndarray = field(repr=False)
    eta_prime_avgs: np.ndarray = field(repr=False)
    effective: np.ndarray = field(repr=False)
    block_mse: np.ndarray = field(default=None, repr=False)


@dataclass
class CsAmpTrace:
    """ Sequence of `CsAmpState` for t = 1..T plus the final estimate x^{T+1}. """
    states: list
    final_estimate: np.ndarray
    final_block_mse: np.ndarray = None
    seed: int = None

    @property
    def iterations(self):
        return len(self.states)

    def block_mse(self):
        """ Array (T + 1, L_c) of empirical block MSE of x^1, ..., x^{T+1}. """
        if self.final_block_mse is None:
            raise ConfigError("trace was produced without the true signal")
        return np.vstack([s.block_mse for s in self.states] + [self.final_block_mse])


@dataclass(frozen=True)
class CsProblem:
    """ One compressed sensing instance y = A x + w with its SE schedule. """
    matrix: object
    y: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    prior: object
    noise_var: float
    schedule: object

    @property
    def spec(self):
        return self.matrix.spec

    @property
    def seed(self):
        return self.matrix.seed


def make_cs_problem(spec, prior, noise_var, seed, schedule, max_entries=None):
    """ Draw signal, noise and sensing matrix from independent streams of `seed`.

    Parameters
    ----------
    spec: EnsembleSpec
    prior: Prior
    noise_var: float
        Noise variance sigma^2, nonnegative.
    seed: int
    schedule: SeSchedule
        Coupled state evolution run on the same (W, delta, noise_var, prior).
    max_entries: int (optional)
        Memory cap forwarded to `sample_sensing_matrix`.

    Returns
    -------
    CsProblem
    """
    if noise_var < 0:
        raise ConfigError("noise variance must be nonnegative")
    kwargs = {} if max_entries is None else {'max_entries': max_entries}
    A = sample_sensing_matrix(spec, seed, **kwargs)
    x = prior.sample(spec.n, np.random.SeedSequence(seed, spawn_key=(SIGNAL_STREAM,)))
    w = np.sqrt(noise_var) * block_rng(seed, NOISE_STREAM).standard_normal(spec.m)
    y = A.values @ x + w
    return CsProblem(matrix=A, y=y, x=x, w=w, prior=prior, noise_var=float(noise_var),
                     schedule=schedule)


def _check_schedule(spec, schedule, noise_var, T):
    if schedule.coupling != spec.coupling:
        raise DimensionError("schedule was computed for a different coupling matrix")
    if not np.isclose(schedule.delta, spec.delta, rtol=1e-12, atol=0):
        raise ConfigError("schedule delta {} differs from m0/n0 = {}".format(
            schedule.delta, spec.delta))
    if not np.isclose(schedule.noise_var, noise_var, rtol=1e-12, atol=0):
        raise ConfigError("schedule noise variance {} differs from {}".format(
            schedule.noise_var, noise_var))
    if not schedule.covers(T):
        raise DimensionError("schedule does not reach iteration {}".format(T))


def _block_mse(estimate, truth, spec):
    err = (estimate - truth).reshape(spec.coupling.Lc, spec.n0)
    return np.mean(err ** 2, axis=1)


def cs_amp_run(A, y, prior, noise_var, schedule, T, truth=None):
    """ Run T iterations of compressed-sensing AMP.

    Parameters
    ----------
    A: SensingMatrix
        Draw from M(W, m0, n0); its `EnsembleSpec` fixes the group structure.
    y: ndarray(float)
        Measurements, shape (m,).
    prior: Prior
        Signal law used by the Bayes denoiser.
    noise_var: float
        Noise variance, must match the schedule.
    schedule: SeSchedule
        Coupled state evolution with phi(t) available for t = 1..T.
    T: int
        Number of iterations, at least one.
    truth: ndarray(float) (optional)
        True signal; enables per-block MSE records.

    Returns
    -------
    CsAmpTrace
    """
    spec = A.spec
    W = spec.coupling.entries
    values = A.values
    y = np.asarray(y, dtype=float)
    if int(T) < 1:
        raise ConfigError("need at least one iteration")
    if y.shape != (spec.m,):
        raise DimensionError("y has shape {}, expected ({},)".format(y.shape, spec.m))
    if truth is not None:
        truth = np.asarray(truth, dtype=float)
        if truth.shape != (spec.n,):
            raise DimensionError("truth has shape {}, expected ({},)".format(truth.shape, spec.n))
    _check_schedule(spec, schedule, noise_var, T)

    rows, cols = spec.row_groups(), spec.col_groups()
    x = np.full(spec.n, prior.mean())
    r_prev = np.zeros(spec.m)
    onsager_groups = np.zeros(spec.coupling.Lr)
    states = []
    for t in range(1, int(T) + 1):
        phi = schedule.phi_at(t)
        Q = compute_q(W, phi)
        onsager = onsager_groups[rows]
        r = y - values @ x + onsager * r_prev
        if not np.all(np.isfinite(r)) or np.max(np.abs(r)) > DIVERGENCE_BOUND:
            raise DivergenceError(t, "residual diverged at iteration {}".format(t))

        # (Q o A)^T r, one transposed product per row group
        partial = np.stack([values[spec.row_slice(b)].T @ r[spec.row_slice(b)]
                            for b in range(spec.coupling.Lr)])
        effective = x + np.sum(Q[:, cols] * partial, axis=0)
        snr = schedule.s_at(t)
        stats = prior.denoise(effective, snr[cols])
        eta_prime_avgs = stats.mean_derivative.reshape(spec.coupling.Lc, spec.n0).mean(axis=1)

        states.append(CsAmpState(
            iteration=t, estimate=x, residual=r, onsager=onsager, q_matrix=Q,
            eta_prime_avgs=eta_prime_avgs, effective=effective,
            block_mse=None if truth is None else _block_mse(x, truth, spec)))
        _logger.debug("cs amp iteration %d, residual norm %.6g", t, np.linalg.norm(r))

        onsager_groups = compute_onsager(W, Q, eta_prime_avgs, spec.delta)
        x, r_prev = stats.mean, r

    return CsAmpTrace(states=states, final_estimate=x,
                      final_block_mse=None if truth is None else _block_mse(x, truth, spec),
                      seed=A.seed)


def run_problem(problem, T):
    """ `cs_amp_run` on a `CsProblem`, with the signal as truth. """
    return cs_amp_run(problem.matrix, problem.y, problem.prior, problem.noise_var,
                      problem.schedule, T, truth=problem.x)


def trace_frame(trace, schedule, run_id=0):
    """ Per-(t, block) rows of a trace with known truth.

    Columns are ``run_id, seed, t, block, mse_empirical, mse_predicted,
    onsager_norm``; `onsager_norm` is the root mean square of b^t.
    """
    mse = trace.block_mse()
    records = []
    for t in range(1, trace.iterations + 2):
        if t <= trace.iterations:
            onsager = trace.states[t - 1].onsager
            onsager_norm = float(np.sqrt(np.mean(onsager ** 2)))
        else:
            onsager_norm = np.nan
        predicted = schedule.psi_at(t)
        for block in range(mse.shape[1]):
            records.append({'run_id': run_id, 'seed': trace.seed, 't': t, 'block': block,
                            'mse_empirical': mse[t - 1, block],
                            'mse_predicted': predicted[block],
                            'onsager_norm': onsager_norm})
    return pd.DataFrame.from_records(
        records, columns=['run_id', 'seed', 't', 'block', 'mse_empirical',
                          'mse_predicted', 'onsager_norm'])
