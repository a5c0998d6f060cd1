r""" Scalar state evolution of spatially coupled compressed sensing.

For a coupling matrix W (L_r x L_c) the recursion reads

.. math::
    \phi_a(t) = \sigma^2 + \frac{1}{\delta} \sum_i W_{a,i} \psi_i(t), \qquad
    \psi_i(t+1) = \mathrm{mmse}\Big(\sum_b W_{b,i} \phi_b(t)^{-1}\Big),

started from psi(0) = phi(0) = +inf, hence psi(1) = Var(X).
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..amp.cs import compute_q, effective_snr
from ..exceptions import ConfigError, DimensionError, NumericalError
from ..priors import DEFAULT_ATOL, DEFAULT_NODES, DEFAULT_RTOL

_logger = logging.getLogger(__name__)

DEFAULT_STOP_TOL = 1e-10
PHI_FLOOR = 1e-300


@dataclass
class SeSchedule:
    """ Output of `coupled_se_run`.

    Row t of `phi` (L_r values) and `psi` (L_c values) holds iteration t.
    Row 0 is the +inf sentinel and is never used in arithmetic. Both arrays
    run up to `last + 1`; when `converged` is set, later iterations return the
    fixed point.
    """
    coupling: object
    delta: float
    noise_var: float
    prior: object
    phi: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    converged: bool = False
    floored: bool = False

    @property
    def last(self):
        """ Last iteration t for which psi(t + 1) was computed. """
        return self.psi.shape[0] - 2

    def covers(self, T):
        return self.converged or T <= self.last

    def _row(self, table, t, name):
        t = int(t)
        if t < 0:
            raise DimensionError("negative iteration {}".format(t))
        if t < table.shape[0]:
            return table[t].copy()
        if self.converged:
            return table[-1].copy()
        raise DimensionError("{} is only available up to t={}".format(name, table.shape[0] - 1))

    def phi_at(self, t):
        return self._row(self.phi, t, 'phi')

    def psi_at(self, t):
        return self._row(self.psi, t, 'psi')

    def s_at(self, t):
        """ Effective snr s_u(t) = sum_r W_{r,u} / phi_r(t), zero at t = 0. """
        if int(t) == 0:
            return np.zeros(self.coupling.Lc)
        return effective_snr(self.coupling, self.phi_at(t))

    def q_at(self, t):
        if int(t) == 0:
            raise DimensionError("Q is undefined at t=0")
        return compute_q(self.coupling, self.phi_at(t))

    def fixed_point(self):
        return self.psi[-1].copy()


def coupled_se_run(W, delta, noise_var, prior, T, stop_tol=DEFAULT_STOP_TOL,
                   phi_floor=PHI_FLOOR, nodes=DEFAULT_NODES, rtol=DEFAULT_RTOL,
                   atol=DEFAULT_ATOL):
    """ Iterate the coupled state evolution.

    Parameters
    ----------
    W: CouplingMatrix
    delta: float
        Undersampling m0 / n0.
    noise_var: float
        sigma^2, nonnegative.
    prior: Prior
    T: int
        Largest iteration, at least one.
    stop_tol: float
        Stop once max_i |psi_i(t+1) - psi_i(t)| < stop_tol.
    phi_floor: float
        Lower bound on phi, engaged only in the noiseless case.
    nodes, rtol, atol:
        Quadrature settings of `Prior.mmse`.

    Returns
    -------
    SeSchedule
    """
    if delta <= 0:
        raise ConfigError("delta must be positive")
    if noise_var < 0:
        raise ConfigError("noise variance must be nonnegative")
    if int(T) < 1:
        raise ConfigError("need at least one iteration")
    entries = np.asarray(W, dtype=float)
    Lr, Lc = entries.shape

    phis = [np.full(Lr, np.inf)]
    psis = [np.full(Lc, np.inf), np.full(Lc, prior.variance())]
    converged = floored = False
    for t in range(1, int(T) + 1):
        phi = noise_var + entries @ psis[t] / delta
        if np.any(phi < phi_floor):
            if not floored:
                _logger.warning("phi reached %.3g at t=%d, flooring at %.3g",
                                float(np.min(phi)), t, phi_floor)
            floored = True
            phi = np.maximum(phi, phi_floor)
        phis.append(phi)
        psi_next = prior.mmse(entries.T @ (1.0 / phi), nodes=nodes, rtol=rtol, atol=atol)
        psis.append(np.atleast_1d(psi_next))
        change = np.max(np.abs(psis[t + 1] - psis[t]))
        _logger.debug("coupled SE t=%d, max psi %.6g, change %.3g", t, np.max(psis[t + 1]), change)
        if change < stop_tol:
            converged = True
            break

    # phi at the last psi, so phi_at and psi_at reach the same iteration
    last_phi = np.maximum(noise_var + entries @ psis[-1] / delta, phi_floor)
    phis.append(last_phi)
    _logger.info("coupled SE stopped after %d iterations (converged=%s)", len(psis) - 2, converged)
    return SeSchedule(coupling=W, delta=float(delta), noise_var=float(noise_var), prior=prior,
                      phi=np.vstack(phis), psi=np.vstack(psis), converged=converged,
                      floored=floored)


def predicted_block_mse(schedule, block, t):
    """ mmse(sum_b W_{b,a} phi_b(t-1)^{-1}) for column group `block`.

    Recomputed from phi with the same vectorized quadrature as the schedule.
    """
    if int(t) < 1:
        raise DimensionError("predicted MSE is defined for t >= 1")
    if not 0 <= block < schedule.coupling.Lc:
        raise DimensionError("block {} outside [0, {})".format(block, schedule.coupling.Lc))
    snr = schedule.s_at(int(t) - 1)
    return float(np.atleast_1d(schedule.prior.mmse(snr))[block])


def schedule_frame(schedule):
    """ Long-format rows ``t, kind, index, value`` for t >= 1. """
    records = []
    for t in range(1, schedule.phi.shape[0]):
        for index, value in enumerate(schedule.phi[t]):
            records.append({'t': t, 'kind': 'phi', 'index': index, 'value': value})
        for index, value in enumerate(schedule.psi[t]):
            records.append({'t': t, 'kind': 'psi', 'index': index, 'value': value})
    return pd.DataFrame.from_records(records, columns=['t', 'kind', 'index', 'value'])


def first_passage_times(schedule, threshold):
    """ Per block, the first t with psi_a(t) <= threshold (-1 if never reached). """
    below = schedule.psi[1:] <= threshold
    hit = below.any(axis=0)
    return np.where(hit, np.argmax(below, axis=0) + 1, -1)


def converged_mse(W, delta, noise_var, prior, max_iterations=2000, stop_tol=DEFAULT_STOP_TOL,
                  **kwargs):
    """ Largest block psi at the end of a run of at most `max_iterations`. """
    schedule = coupled_se_run(W, delta, noise_var, prior, max_iterations, stop_tol=stop_tol,
                              **kwargs)
    return float(np.max(schedule.fixed_point()))


def critical_delta(W, noise_var, prior, threshold, lo, hi, tol=1e-4, max_iterations=2000,
                   stop_tol=DEFAULT_STOP_TOL, **kwargs):
    """ Smallest delta in [lo, hi] whose state evolution ends below `threshold`.

    Bisection on the predicate ``converged_mse(delta) < threshold``, assumed
    monotone in delta.

    Returns
    -------
    float
        Upper end of the final bracket.

    Raises
    ------
    NumericalError
        If the predicate does not change sign on [lo, hi].
    """
    def success(delta):
        return converged_mse(W, delta, noise_var, prior, max_iterations, stop_tol,
                             **kwargs) < threshold

    if not 0 < lo < hi:
        raise ConfigError("need 0 < lo < hi for the bisection bracket")
    if success(lo):
        _logger.info("delta=%g already succeeds, returning the lower bracket end", lo)
        return float(lo)
    if not success(hi):
        raise NumericalError("no transition below MSE {} in delta range [{}, {}]".format(
            threshold, lo, hi))
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if success(mid):
            hi = mid
        else:
            lo = mid
        _logger.debug("bisection bracket [%g, %g]", lo, hi)
    return float(hi)
