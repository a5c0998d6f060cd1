""" Reduction of compressed-sensing AMP to the general orbits.

With the change of variables

    x~^{t+1} = x - (x^t + (Q^t o A)^T r^t),    r~^t = w - r^t,

compressed-sensing AMP becomes a bipartite orbit in dimension q = L_r + L_c
driven by A~ = A / sqrt(L_r W) and two separable maps:

    e(v, y, a; t) = sqrt(L_r) (eta(y_a - v_a; s_a(t-1)) - y_a) [sqrt(W_{:,a}), 0],
    h(u, w, a; t) = sqrt(L_r) (u_a - w_a) [sqrt(W_{a,:}) Q^t_{a,:}, 0].

Stacking both halves into one symmetric matrix turns the bipartite orbit into
a symmetric one that alternates e on the column groups (even steps) with h on
the row groups (odd steps):

    x_s^{2t}_{m+j} = v^{t+1}_j,    x_s^{2t+1}_i = u^{t+1}_i.

Coordinates the maps never read are kept at zero.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from ..ensemble import block_rng
from .cs import run_problem
from .orbit import (Nonlinearity, SymmetricInstance, bipartite_amp_run,
                    symmetric_amp_run)

_logger = logging.getLogger(__name__)

SYMMETRIC_ROW_STREAM = 2 ** 32 - 3
SYMMETRIC_COL_STREAM = 2 ** 32 - 4


class ColumnDenoiserMap(Nonlinearity):
    """ The column map e(v, y, a; t) built from the Bayes denoiser.

    Reads coordinate a of `v` and `y` and writes the L_r row-group coordinates.
    """
    def __init__(self, prior, coupling, schedule, q):
        self.prior = prior
        self.sqrt_w = np.sqrt(np.asarray(coupling, dtype=float))
        self.Lr = self.sqrt_w.shape[0]
        self.schedule = schedule
        self.q = q

    def _parts(self, v, y, groups, t):
        idx = np.arange(len(groups))
        y_a = np.asarray(y, dtype=float)[idx, groups]
        v_a = np.asarray(v, dtype=float)[idx, groups]
        snr = self.schedule.s_at(t - 1)[groups]
        stats = self.prior.denoise(y_a - v_a, snr)
        return idx, y_a, stats

    def value(self, v, y, groups, t):
        groups = np.asarray(groups)
        _, y_a, stats = self._parts(v, y, groups, t)
        out = np.zeros((len(groups), self.q))
        out[:, :self.Lr] = np.sqrt(self.Lr) * (stats.mean - y_a)[:, None] * self.sqrt_w[:, groups].T
        return out

    def jacobian(self, v, y, groups, t):
        groups = np.asarray(groups)
        idx, _, stats = self._parts(v, y, groups, t)
        J = np.zeros((len(groups), self.q, self.q))
        J[idx[:, None], np.arange(self.Lr)[None, :], groups[:, None]] = (
            -np.sqrt(self.Lr) * stats.mean_derivative[:, None] * self.sqrt_w[:, groups].T)
        return J


class RowResidualMap(Nonlinearity):
    """ The row map h(u, w, a; t) = sqrt(L_r) (u_a - w_a) [sqrt(W_{a,:}) Q^t_{a,:}, 0]. """
    def __init__(self, coupling, schedule, q):
        self.W = np.asarray(coupling, dtype=float)
        self.Lr, self.Lc = self.W.shape
        self.schedule = schedule
        self.q = q

    def _weights(self, t):
        return np.sqrt(self.W) * self.schedule.q_at(t)

    def value(self, u, w, groups, t):
        groups = np.asarray(groups)
        idx = np.arange(len(groups))
        diff = np.asarray(u, dtype=float)[idx, groups] - np.asarray(w, dtype=float)[idx, groups]
        out = np.zeros((len(groups), self.q))
        out[:, :self.Lc] = np.sqrt(self.Lr) * diff[:, None] * self._weights(t)[groups]
        return out

    def jacobian(self, u, w, groups, t):
        groups = np.asarray(groups)
        idx = np.arange(len(groups))
        J = np.zeros((len(groups), self.q, self.q))
        J[idx[:, None], np.arange(self.Lc)[None, :], groups[:, None]] = (
            np.sqrt(self.Lr) * self._weights(t)[groups])
        return J


class EmbeddedMap(Nonlinearity):
    """ Symmetric schedule of the embedding.

    Step 2t applies c e(.; t+1) to column groups (labels >= L_r), step 2t+1
    applies c h(.; t+1) to row groups; everything else maps to zero.
    """
    def __init__(self, e, h, Lr, scale):
        self.e = e
        self.h = h
        self.Lr = Lr
        self.scale = scale

    def _select(self, groups, step):
        if step % 2 == 0:
            return groups >= self.Lr, self.e, step // 2 + 1, -self.Lr
        return groups < self.Lr, self.h, (step - 1) // 2 + 1, 0

    def value(self, x, y, groups, step):
        groups = np.asarray(groups)
        mask, func, t, shift = self._select(groups, step)
        out = np.zeros(np.shape(x))
        if np.any(mask):
            out[mask] = self.scale * func.value(x[mask], y[mask], groups[mask] + shift, t)
        return out

    def jacobian(self, x, y, groups, step):
        groups = np.asarray(groups)
        mask, func, t, shift = self._select(groups, step)
        k, q = np.shape(x)
        J = np.zeros((k, q, q))
        if np.any(mask):
            J[mask] = self.scale * func.jacobian(x[mask], y[mask], groups[mask] + shift, t)
        return J


@dataclass(frozen=True)
class BipartiteInstance:
    """ Arguments of `bipartite_amp_run` for one compressed sensing problem. """
    A_tilde: np.ndarray = field(repr=False)
    e: Nonlinearity
    h: Nonlinearity
    y: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    v1: np.ndarray = field(repr=False)
    row_groups: np.ndarray = field(repr=False)
    col_groups: np.ndarray = field(repr=False)

    @property
    def q(self):
        return self.v1.shape[1]

    def run(self, T, check_jacobians=False):
        return bipartite_amp_run(self.A_tilde, self.e, self.h, self.y, self.w, self.v1, T,
                                 row_groups=self.row_groups, col_groups=self.col_groups,
                                 check_jacobians=check_jacobians)


def normalized_matrix(problem, seed):
    """ A~ = A / sqrt(L_r W) blockwise, zero-variance blocks filled with N(0, 1/m). """
    spec = problem.spec
    W = spec.coupling.entries
    A = problem.matrix.values
    A_tilde = np.empty_like(A)
    for r in range(spec.coupling.Lr):
        for c in range(spec.coupling.Lc):
            rs, cs = spec.row_slice(r), spec.col_slice(c)
            if W[r, c] > 0:
                A_tilde[rs, cs] = A[rs, cs] / np.sqrt(spec.coupling.Lr * W[r, c])
            else:
                fill = block_rng(seed, r, c).standard_normal((spec.m0, spec.n0))
                A_tilde[rs, cs] = fill / np.sqrt(spec.m)
    return A_tilde


def build_bipartite(problem, seed):
    """ Bipartite instance (A~, e, h, side information, v^1 = 0) of a `CsProblem`. """
    spec = problem.spec
    Lr, Lc = spec.coupling.Lr, spec.coupling.Lc
    q = Lr + Lc
    rows, cols = spec.row_groups(), spec.col_groups()
    y_side = np.zeros((spec.n, q))
    y_side[np.arange(spec.n), cols] = problem.x
    w_side = np.zeros((spec.m, q))
    w_side[np.arange(spec.m), rows] = problem.w
    e = ColumnDenoiserMap(problem.prior, spec.coupling, problem.schedule, q)
    h = RowResidualMap(spec.coupling, problem.schedule, q)
    return BipartiteInstance(A_tilde=normalized_matrix(problem, seed), e=e, h=h,
                             y=y_side, w=w_side, v1=np.zeros((spec.n, q)),
                             row_groups=rows, col_groups=cols)


def embedding_delta(problem):
    """ Aspect ratio m / n used by the symmetric scale factor. """
    return problem.spec.m / problem.spec.n


def build_embedding(problem, seed, bipartite=None):
    """ Symmetric instance whose orbit reproduces the bipartite orbit of `problem`.

    Parameters
    ----------
    problem: CsProblem
    seed: int
        Seed of the filled blocks of A~ and of the diagonal blocks B1, B2.
    bipartite: BipartiteInstance (optional)
        Reuse an instance built with `build_bipartite(problem, seed)`.

    Returns
    -------
    SymmetricInstance
        N = m + n coordinates in q = L_r + L_c groups: row group r holds
        coordinates of R_r, group L_r + c those of C_c.
    """
    if bipartite is None:
        bipartite = build_bipartite(problem, seed)
    spec = problem.spec
    m, n, Lr = spec.m, spec.n, spec.coupling.Lr
    delta_s = embedding_delta(problem)
    shrink = np.sqrt(delta_s / (delta_s + 1.0))

    C1 = block_rng(seed, SYMMETRIC_ROW_STREAM).normal(scale=np.sqrt(1.0 / (2 * m)), size=(m, m))
    C2 = block_rng(seed, SYMMETRIC_COL_STREAM).normal(scale=np.sqrt(1.0 / (2 * m)), size=(n, n))
    off = shrink * bipartite.A_tilde
    A_s = np.empty((m + n, m + n))
    A_s[:m, :m] = shrink * (C1 + C1.T)
    A_s[m:, m:] = shrink * (C2 + C2.T)
    A_s[:m, m:] = off
    A_s[m:, :m] = off.T

    side = np.vstack([bipartite.w, bipartite.y])
    nonlinearity = EmbeddedMap(bipartite.e, bipartite.h, Lr, 1.0 / shrink)
    sizes = [spec.m0] * Lr + [spec.n0] * spec.coupling.Lc
    return SymmetricInstance(matrix=A_s, group_sizes=tuple(sizes), side_info=side,
                             nonlinearity=nonlinearity,
                             initial=np.zeros((m + n, bipartite.q)))


def change_of_variables(problem, trace):
    """ Transformed CS iterates.

    Returns
    -------
    tuple(list, list)
        r~^t = w - r^t for t = 1..T and x~^t for t = 1..T+1, where x~^1 = 0
        and x~^{t+1} = x - (x^t + (Q^t o A)^T r^t).
    """
    r_tilde = [problem.w - s.residual for s in trace.states]
    x_tilde = [np.zeros(problem.spec.n)] + [problem.x - s.effective for s in trace.states]
    return r_tilde, x_tilde


@dataclass(frozen=True)
class IdentityReport:
    """ Largest relative deviation of an identity and where it first failed. """
    max_deviation: float
    first_failure: tuple = None
    name: str = ''

    def passed(self):
        return self.first_failure is None


def _deviation(actual, expected):
    scale = np.max(np.abs(expected), initial=0.0)
    diff = np.abs(np.asarray(actual) - np.asarray(expected))
    if scale == 0:
        return (0.0 if np.all(diff == 0) else np.inf), diff
    return float(np.max(diff) / scale), diff / scale


def _compare(pairs, tol, name):
    worst, first = 0.0, None
    for t, actual, expected in pairs:
        dev, rel = _deviation(actual, expected)
        worst = max(worst, dev)
        if first is None and dev > tol:
            i = int(np.argmax(rel)) if np.ndim(rel) else 0
            first = (i, t)
    if first is not None:
        _logger.warning("%s identity failed first at coordinate %d, t=%d", name, *first)
    return IdentityReport(max_deviation=worst, first_failure=first, name=name)


def check_bipartite_identity(problem, cs_trace, bipartite_trace, tol=1e-6):
    """ Compare u^t_i(g(i)) with r~^t_i and v^{t+1}_j(g(j)) with x~^{t+1}_j. """
    spec = problem.spec
    rows, cols = spec.row_groups(), spec.col_groups()
    r_tilde, x_tilde = change_of_variables(problem, cs_trace)
    T = min(len(bipartite_trace.u), cs_trace.iterations)
    pairs = []
    for t in range(1, T + 1):
        u = bipartite_trace.u_at(t)
        v = bipartite_trace.v_at(t + 1)
        pairs.append((t, u[np.arange(spec.m), rows], r_tilde[t - 1]))
        pairs.append((t + 1, v[np.arange(spec.n), cols], x_tilde[t]))
    return _compare(pairs, tol, 'bipartite')


def check_symmetric_identity(bipartite_trace, symmetric_trace, m, tol=1e-6):
    """ Compare x_s^{2t}_{m+j} with v^{t+1}_j and x_s^{2t+1}_i with u^{t+1}_i. """
    pairs = []
    steps = len(symmetric_trace) - 1
    for t in range(steps // 2 + 1):
        if 2 * t <= steps and t + 1 <= len(bipartite_trace.v):
            pairs.append((2 * t, symmetric_trace.state(2 * t)[m:], bipartite_trace.v_at(t + 1)))
        if 2 * t + 1 <= steps and t + 1 <= len(bipartite_trace.u):
            pairs.append((2 * t + 1, symmetric_trace.state(2 * t + 1)[:m], bipartite_trace.u_at(t + 1)))
    return _compare(pairs, tol, 'symmetric')


def run_embedding_checks(problem, T, seed, tol=1e-6, check_jacobians=False):
    """ Run all three iterations on one problem and check both identities.

    Returns
    -------
    tuple(IdentityReport, IdentityReport)
    """
    cs_trace = run_problem(problem, T)
    bipartite = build_bipartite(problem, seed)
    bi_trace = bipartite.run(T, check_jacobians=check_jacobians)
    symmetric = build_embedding(problem, seed, bipartite=bipartite)
    sym_trace = symmetric_amp_run(symmetric, 2 * T - 1, check_jacobians=check_jacobians)
    return (check_bipartite_identity(problem, cs_trace, bi_trace, tol),
            check_symmetric_identity(bi_trace, sym_trace, problem.spec.m, tol))
