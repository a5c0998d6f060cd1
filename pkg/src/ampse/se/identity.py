""" Consistency between the coupled and the general state evolution.

The symmetric embedding of compressed-sensing AMP is itself a symmetric AMP
orbit, so its general state evolution must reproduce the coupled recursion:
on column group a,

    1 / Sigma^{2t}_{aa} = sum_b W_{b,a} / phi_b(t).

`verify_diagonal_identity` runs both recursions on one instance and reports
how far the two sides are apart.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from ..amp.embedding import ColumnDenoiserMap, EmbeddedMap, RowResidualMap
from ..exceptions import NumericalError
from .coupled import coupled_se_run
from .general import (DEFAULT_BATCH_SIZE, DEFAULT_MC_SAMPLES, CoordinateSideInfo,
                      general_se_run)

_logger = logging.getLogger(__name__)

Q_IDENTITY_TOL = 1e-10


@dataclass(frozen=True)
class EmbeddingSeInstance:
    """ Arguments of `general_se_run` for the symmetric embedding. """
    group_fractions: np.ndarray = field(repr=False)
    samplers: list = field(repr=False)
    nonlinearity: object
    sigma_hat0: np.ndarray = field(repr=False)
    Lr: int
    Lc: int

    @property
    def q(self):
        return self.Lr + self.Lc


def embedding_se_instance(W, delta, noise_var, prior, schedule):
    """ General state evolution instance of the symmetric embedding.

    Parameters
    ----------
    W: CouplingMatrix
    delta: float
        m0 / n0.
    noise_var: float
    prior: Prior
    schedule: SeSchedule
        Coupled recursion that drives the denoisers and the Q matrices.

    Returns
    -------
    EmbeddingSeInstance
        q = L_r + L_c groups with fractions delta / (L_r delta + L_c) for
        row groups and 1 / (L_r delta + L_c) for column groups.
    """
    entries = np.asarray(W, dtype=float)
    Lr, Lc = entries.shape
    q = Lr + Lc
    total = Lr * delta + Lc
    fractions = np.concatenate([np.full(Lr, delta / total), np.full(Lc, 1.0 / total)])
    delta_s = delta * Lr / Lc
    scale = np.sqrt((delta_s + 1.0) / delta_s)

    e = ColumnDenoiserMap(prior, W, schedule, q)
    h = RowResidualMap(W, schedule, q)
    nonlinearity = EmbeddedMap(e, h, Lr, scale)
    samplers = [CoordinateSideInfo(q, a, noise_var) for a in range(Lr)]
    samplers += [CoordinateSideInfo(q, a, prior) for a in range(Lc)]

    # x^0 = 0, so step 0 emits scale * sqrt(Lr) (E X - X) sqrt(W_{:,a}) on column groups
    sigma_hat0 = np.zeros((q, q, q))
    sqrt_w = np.sqrt(entries)
    for a in range(Lc):
        col = sqrt_w[:, a]
        sigma_hat0[Lr + a, :Lr, :Lr] = scale ** 2 * Lr * prior.variance() * np.outer(col, col)
    return EmbeddingSeInstance(group_fractions=fractions, samplers=samplers,
                               nonlinearity=nonlinearity, sigma_hat0=sigma_hat0, Lr=Lr, Lc=Lc)


@dataclass(frozen=True)
class DiagonalIdentityReport:
    """ Relative deviations |1/Sigma^{2t}_{aa} - s_a(t)| / s_a(t), shape (T, L_c). """
    deviations: np.ndarray = field(repr=False)
    inverse_sigma: np.ndarray = field(repr=False)
    effective_snr: np.ndarray = field(repr=False)
    q_identity_error: float

    @property
    def max_deviation(self):
        return float(np.max(self.deviations))

    def passed(self, tol=0.02):
        return self.max_deviation < tol


def verify_diagonal_identity(W, delta, noise_var, prior, T, mc_samples=DEFAULT_MC_SAMPLES,
                             seed=0, batch_size=DEFAULT_BATCH_SIZE, threads=None):
    """ Compare the general state evolution of the embedding with the coupled one.

    Parameters
    ----------
    W: CouplingMatrix
    delta: float
    noise_var: float
    prior: Prior
    T: int
        Number of coupled iterations compared; the general recursion runs 2T steps.
    mc_samples: int
        Monte Carlo draws per expectation (optional, default=1e6).

    Returns
    -------
    DiagonalIdentityReport

    Raises
    ------
    NumericalError
        If sum_b W_{b,a} Q_{b,a} differs from one.
    """
    schedule = coupled_se_run(W, delta, noise_var, prior, T)
    entries = np.asarray(W, dtype=float)
    q_error = 0.0
    for t in range(1, int(T) + 1):
        column_sums = np.sum(entries * schedule.q_at(t), axis=0)
        q_error = max(q_error, float(np.max(np.abs(column_sums - 1.0))))
    if q_error > Q_IDENTITY_TOL:
        raise NumericalError("weighted column sums of Q deviate from one by {:.3g}".format(q_error))

    instance = embedding_se_instance(W, delta, noise_var, prior, schedule)
    states = general_se_run(instance.group_fractions, instance.samplers, instance.nonlinearity,
                            instance.sigma_hat0, 2 * int(T), mc_samples=mc_samples, seed=seed,
                            batch_size=batch_size, threads=threads)
    Lc = instance.Lc
    inverse = np.empty((int(T), Lc))
    snr = np.empty((int(T), Lc))
    for t in range(1, int(T) + 1):
        sigma = states[2 * t - 1].sigma
        inverse[t - 1] = 1.0 / np.diag(sigma)[:Lc]
        snr[t - 1] = schedule.s_at(t)
    deviations = np.abs(inverse - snr) / snr
    _logger.info("diagonal identity: max relative deviation %.3g over %d iterations",
                 float(np.max(deviations)), int(T))
    return DiagonalIdentityReport(deviations=deviations, inverse_sigma=inverse,
                                  effective_snr=snr, q_identity_error=q_error)
