r""" General approximate message passing orbits.

A symmetric orbit runs

.. math::
    x^{t+1} = A f(x^t; t) - f(x^{t-1}; t-1) B_t^T,
    \qquad B_t = \frac{1}{N} \sum_j \frac{\partial f^j}{\partial x}(x^t_j, t),

on rows x_i in R^q, where f acts row by row as f^i(x, t) = g(x, y_i, a(i), t)
with side information y_i and group label a(i). A bipartite orbit alternates
two such maps through a rectangular matrix.

Nonlinearities are objects with vectorized `value` and `jacobian` methods:
every row of the inputs is one coordinate of the orbit and `groups` holds its
label. `jacobian` returns an array J with ``J[i, k, l] = dg_k / dx_l``.
"""
import logging
from dataclasses import dataclass, field

import numdifftools as nd
import numpy as np

from ..exceptions import ConfigError, DimensionError, DivergenceError, NumericalError

_logger = logging.getLogger(__name__)

DIVERGENCE_BOUND = 1e12


class Nonlinearity(object):
    """ Separable map g(x, y, a, t) from R^q to R^q with analytic Jacobian.

    Subclasses implement `value` and `jacobian`. Both receive arrays `x` of
    shape (k, q), `y` of shape (k, p) and integer `groups` of shape (k,).
    """
    def value(self, x, y, groups, t):
        raise NotImplementedError

    def jacobian(self, x, y, groups, t):
        raise NotImplementedError

    def check_jacobian(self, x, y, groups, t, rows=None, rtol=1e-5, atol=1e-7):
        """ Compare `jacobian` against numerical differentiation.

        Parameters
        ----------
        x, y, groups:
            Arguments as for `value`.
        t: int
            Iteration index.
        rows: iterable(int) (optional)
            Rows to check, by default at most ten evenly spaced rows.

        Returns
        -------
        float
            Largest absolute deviation found.

        Raises
        ------
        NumericalError
            If a deviation exceeds ``atol + rtol * |J|``.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        groups = np.asarray(groups)
        if rows is None:
            rows = np.unique(np.linspace(0, len(x) - 1, num=min(10, len(x))).astype(int))
        analytic = self.jacobian(x, y, groups, t)
        worst = 0.0
        for i in rows:
            def row_value(v, i=i):
                return self.value(v[None, :], y[i:i + 1], groups[i:i + 1], t)[0]
            numeric = np.atleast_2d(nd.Jacobian(row_value)(x[i]))
            deviation = np.abs(numeric - analytic[i])
            worst = max(worst, float(np.max(deviation)))
            if np.any(deviation > atol + rtol * np.abs(analytic[i])):
                raise NumericalError(
                    "Jacobian of {} at row {}, t={} deviates by {:.3g} from finite differences".format(
                        type(self).__name__, i, t, float(np.max(deviation))))
        return worst


class IdentityNonlinearity(Nonlinearity):
    """ g(x, y, a, t) = x. """
    def value(self, x, y, groups, t):
        return np.array(x, dtype=float)

    def jacobian(self, x, y, groups, t):
        k, q = np.shape(x)
        return np.broadcast_to(np.eye(q), (k, q, q)).copy()


class ZeroNonlinearity(Nonlinearity):
    """ g(x, y, a, t) = 0. """
    def value(self, x, y, groups, t):
        return np.zeros(np.shape(x))

    def jacobian(self, x, y, groups, t):
        k, q = np.shape(x)
        return np.zeros((k, q, q))


class TanhNonlinearity(Nonlinearity):
    """ g(x, y, a, t) = side * y + scale * tanh(x), coordinate-wise.

    Lipschitz in x, with the side information entering additively.
    """
    def __init__(self, scale=0.8, side=1.0):
        self.scale = float(scale)
        self.side = float(side)

    def value(self, x, y, groups, t):
        return self.side * np.asarray(y, dtype=float) + self.scale * np.tanh(x)

    def jacobian(self, x, y, groups, t):
        k, q = np.shape(x)
        diag = self.scale / np.cosh(x) ** 2
        J = np.zeros((k, q, q))
        J[:, np.arange(q), np.arange(q)] = diag
        return J


class LinearNonlinearity(Nonlinearity):
    """ g(x, y, a, t) = G_a x with one fixed q x q matrix per group. """
    def __init__(self, matrices):
        matrices = np.asarray(matrices, dtype=float)
        if matrices.ndim != 3 or matrices.shape[1] != matrices.shape[2]:
            raise DimensionError("linear nonlinearity needs an array of square matrices")
        self.matrices = matrices

    def value(self, x, y, groups, t):
        G = self.matrices[np.asarray(groups)]
        return np.einsum('ikl,il->ik', G, np.asarray(x, dtype=float))

    def jacobian(self, x, y, groups, t):
        return self.matrices[np.asarray(groups)].copy()


class CallableNonlinearity(Nonlinearity):
    """ Wrap vectorized callables ``func(x, y, groups, t)`` and ``jac(x, y, groups, t)``. """
    def __init__(self, func, jac):
        self.func = func
        self.jac = jac

    def value(self, x, y, groups, t):
        return np.asarray(self.func(x, y, groups, t), dtype=float)

    def jacobian(self, x, y, groups, t):
        return np.asarray(self.jac(x, y, groups, t), dtype=float)


NONLINEARITIES = {
    'identity': IdentityNonlinearity,
    'zero': ZeroNonlinearity,
    'tanh': TanhNonlinearity,
    'linear': LinearNonlinearity,
}


def nonlinearity_from_config(config):
    """ Build a bundled nonlinearity from ``{"name": ..., **kwargs}``. """
    config = dict(config)
    name = config.pop('name', None)
    if name not in NONLINEARITIES:
        raise ConfigError("unknown nonlinearity {!r}, choose from {}".format(
            name, sorted(NONLINEARITIES)))
    try:
        return NONLINEARITIES[name](**config)
    except TypeError as err:
        raise ConfigError("bad arguments for nonlinearity {!r}: {}".format(name, err))


def group_labels(group_sizes):
    return np.repeat(np.arange(len(group_sizes)), group_sizes)


def group_moments(x, groups, q_groups):
    """ Per-group empirical second moments (1/|C_a|) sum_{i in C_a} x_i x_i^T. """
    x = np.asarray(x, dtype=float)
    out = np.zeros((q_groups, x.shape[1], x.shape[1]))
    for a in range(q_groups):
        rows = x[groups == a]
        out[a] = rows.T @ rows / len(rows)
    return out


@dataclass(frozen=True)
class SymmetricInstance:
    """ Symmetric AMP instance (A, C_a, y_i, g, x^0).

    Parameters
    ----------
    matrix: ndarray
        N x N symmetric matrix.
    group_sizes: tuple(int)
        Positive sizes |C_a| of the q contiguous groups, summing to N.
    side_info: ndarray
        N x p side information, one row per coordinate.
    nonlinearity: Nonlinearity
        Separable map applied row by row. Expected to be locally Lipschitz in x.
    initial: ndarray
        N x q initial condition x^0.
    """
    matrix: np.ndarray = field(repr=False)
    group_sizes: tuple
    side_info: np.ndarray = field(repr=False)
    nonlinearity: Nonlinearity
    initial: np.ndarray = field(repr=False)

    def __post_init__(self):
        A = np.asarray(self.matrix)
        sizes = tuple(int(s) for s in self.group_sizes)
        object.__setattr__(self, 'group_sizes', sizes)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError("matrix must be square")
        if not np.array_equal(A, A.T):
            raise ConfigError("matrix must be symmetric")
        if any(s <= 0 for s in sizes) or sum(sizes) != A.shape[0]:
            raise ConfigError("group sizes must be positive and sum to N = {}".format(A.shape[0]))
        if np.ndim(self.initial) != 2 or np.shape(self.initial) != (A.shape[0], len(sizes)):
            raise DimensionError("initial condition must have shape (N, q) = ({}, {})".format(
                A.shape[0], len(sizes)))
        if np.ndim(self.side_info) != 2 or np.shape(self.side_info)[0] != A.shape[0]:
            raise DimensionError("side information needs one row per coordinate")

    @property
    def N(self):
        return self.matrix.shape[0]

    @property
    def q(self):
        return len(self.group_sizes)

    @property
    def groups(self):
        return group_labels(self.group_sizes)

    @property
    def group_fractions(self):
        return np.asarray(self.group_sizes, dtype=float) / self.N


@dataclass(frozen=True)
class OrbitRecord:
    """ State x^t, Onsager matrix B_t (None for the last state) and group moments. """
    iteration: int
    state: np.ndarray = field(repr=False)
    onsager: np.ndarray = field(repr=False)
    moments: np.ndarray = field(repr=False)


@dataclass
class OrbitTrace:
    records: list

    def state(self, t):
        return self.records[t].state

    def onsager(self, t):
        return self.records[t].onsager

    def moments(self, t):
        return self.records[t].moments

    def __len__(self):
        return len(self.records)


def _average_jacobian(nonlinearity, x, y, groups, t, scale):
    J = np.asarray(nonlinearity.jacobian(x, y, groups, t), dtype=float)
    if J.shape != (x.shape[0], x.shape[1], x.shape[1]):
        raise DimensionError("Jacobian at t={} has shape {}, expected {}".format(
            t, J.shape, (x.shape[0], x.shape[1], x.shape[1])))
    return J.sum(axis=0) / scale


def _evaluate(nonlinearity, x, y, groups, t, check):
    if check:
        nonlinearity.check_jacobian(x, y, groups, t)
    value = np.asarray(nonlinearity.value(x, y, groups, t), dtype=float)
    if value.shape != x.shape:
        raise DimensionError("nonlinearity at t={} returned shape {}, expected {}".format(
            t, value.shape, x.shape))
    return value


def _guard(x, t, bound):
    if not np.all(np.isfinite(x)) or np.max(np.abs(x), initial=0.0) > bound:
        raise DivergenceError(t)


def symmetric_amp_run(instance, T, check_jacobians=False, divergence_bound=DIVERGENCE_BOUND):
    """ Iterate a symmetric AMP orbit for T steps from x^0.

    Parameters
    ----------
    instance: SymmetricInstance
    T: int
        Number of steps; the trace holds x^0, ..., x^T.
    check_jacobians: bool
        Validate the analytic Jacobian against finite differences every step.
    divergence_bound: float
        Largest admissible absolute entry.

    Returns
    -------
    OrbitTrace

    Raises
    ------
    DivergenceError
        If an iterate is non-finite or exceeds `divergence_bound`.
    """
    A = np.asarray(instance.matrix, dtype=float)
    y = np.asarray(instance.side_info, dtype=float)
    groups = instance.groups
    q = instance.q
    x = np.asarray(instance.initial, dtype=float)
    f_prev = np.zeros_like(x)
    records = []
    for t in range(int(T)):
        f = _evaluate(instance.nonlinearity, x, y, groups, t, check_jacobians)
        B = _average_jacobian(instance.nonlinearity, x, y, groups, t, instance.N)
        records.append(OrbitRecord(t, x, B, group_moments(x, groups, q)))
        x_next = A @ f - f_prev @ B.T
        _guard(x_next, t + 1, divergence_bound)
        _logger.debug("symmetric orbit step %d, max |x| = %.6g", t + 1, np.max(np.abs(x_next)))
        x, f_prev = x_next, f
    records.append(OrbitRecord(int(T), x, None, group_moments(x, groups, q)))
    return OrbitTrace(records)


@dataclass
class BipartiteTrace:
    """ Iterates u^1..u^T (m x q) and v^1..v^{T+1} (n x q) with B_t and D_t. """
    u: list = field(default_factory=list)
    v: list = field(default_factory=list)
    B: list = field(default_factory=list)
    D: list = field(default_factory=list)

    def u_at(self, t):
        return self.u[t - 1]

    def v_at(self, t):
        return self.v[t - 1]


def bipartite_amp_run(A_tilde, e, h, y, w, v1, T, row_groups=None, col_groups=None,
                      check_jacobians=False, divergence_bound=DIVERGENCE_BOUND):
    """ Iterate the rectangular orbit

    .. math::
        u^t = \\tilde A e(v^t; t) - h(u^{t-1}; t-1) B_t^T, \\qquad
        v^{t+1} = \\tilde A^T h(u^t; t) - e(v^t; t) D_t^T,

    with h(u^0; 0) = 0, B_t = (1/m) sum_j de/dv and D_t = (1/m) sum_i dh/du.

    Parameters
    ----------
    A_tilde: ndarray
        m x n matrix.
    e, h: Nonlinearity
        Column map (side information `y`, labels `col_groups`) and row map
        (side information `w`, labels `row_groups`).
    y: ndarray
        n x p column side information.
    w: ndarray
        m x p row side information.
    v1: ndarray
        n x q initial condition.
    T: int
        Number of u-iterates.

    Returns
    -------
    BipartiteTrace
    """
    A = np.asarray(A_tilde, dtype=float)
    m, n = A.shape
    v = np.asarray(v1, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if v.ndim != 2 or v.shape[0] != n:
        raise DimensionError("v1 must have shape (n, q) with n = {}".format(n))
    if y.shape[0] != n or w.shape[0] != m:
        raise DimensionError("side information rows must match the matrix shape")
    row_groups = np.zeros(m, dtype=int) if row_groups is None else np.asarray(row_groups)
    col_groups = np.zeros(n, dtype=int) if col_groups is None else np.asarray(col_groups)

    trace = BipartiteTrace(v=[v])
    h_prev = np.zeros((m, v.shape[1]))
    for t in range(1, int(T) + 1):
        e_val = _evaluate(e, v, y, col_groups, t, check_jacobians)
        B = _average_jacobian(e, v, y, col_groups, t, m)
        u = A @ e_val - h_prev @ B.T
        _guard(u, t, divergence_bound)
        h_val = _evaluate(h, u, w, row_groups, t, check_jacobians)
        D = _average_jacobian(h, u, w, row_groups, t, m)
        v = A.T @ h_val - e_val @ D.T
        _guard(v, t + 1, divergence_bound)
        trace.u.append(u)
        trace.v.append(v)
        trace.B.append(B)
        trace.D.append(D)
        h_prev = h_val
    return trace
