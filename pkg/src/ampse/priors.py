r""" Scalar signal priors and their Gaussian-channel posterior statistics.

A `Prior` is a finite mixture of point masses ("atoms") and Gaussian
components. For this family the posterior of X given the observation

.. math::
    Y = X + s^{-1/2} Z, \qquad Z \sim N(0, 1)

is again a mixture with closed-form components, which gives the Bayes-optimal
denoiser, its derivative and the posterior variance without any numerical
integration. The minimum mean square error ``mmse(s)`` requires one integral
over the observation, done by Gauss-Hermite quadrature, except between two
well separated components of equal predictive variance where the trapezoid
rule in their half log-odds resolves the narrow crossover.
"""
import functools
import logging
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy import special

from .exceptions import ConfigError, NumericalError, QuadratureError

_logger = logging.getLogger(__name__)

WEIGHT_TOL = 1e-12
DEFAULT_NODES = 127
DEFAULT_RTOL = 1e-6
DEFAULT_ATOL = 1e-14
# pairs of equal variance further apart than this many predictive standard
# deviations are integrated in their half log-odds
SHARP_SEPARATION = 2.0
SECH_HALF_WIDTH = 30.0


@functools.lru_cache(maxsize=16)
def gauss_hermite_normal(n):
    """ Gauss-Hermite nodes and weights for expectations over N(0, 1).

    Parameters
    ----------
    n: int
        Number of nodes.

    Returns
    -------
    tuple(ndarray, ndarray)
        Nodes `z` and weights `w` such that E f(Z) ~ sum(w * f(z)), with
        sum(w) = 1.
    """
    if n < 2:
        raise ConfigError("quadrature needs at least 2 nodes, got {}".format(n))
    x, w = hermgauss(n)
    z = np.sqrt(2.0) * x
    w = w / np.sqrt(np.pi)
    z.setflags(write=False)
    w.setflags(write=False)
    return z, w


@dataclass(frozen=True)
class PosteriorStats:
    """ Posterior summary of X given one Gaussian-noise observation.

    `mean` is the denoiser value eta(y), `variance` is Var(X | Y = y) and
    `mean_derivative` is eta'(y) = snr * Var(X | Y = y).
    """
    mean: np.ndarray
    variance: np.ndarray
    mean_derivative: np.ndarray


class Prior(object):
    """ Mixture of atoms and Gaussian components on the real line.

    Parameters
    ----------
    atoms: list((float, float))
        Pairs ``(value, weight)`` of point masses.
    gaussians: list((float, float, float))
        Triples ``(weight, mean, variance)`` of Gaussian components.

    Raises
    ------
    ConfigError
        If weights are negative or do not sum to one, a Gaussian variance is
        not positive, or atom values repeat.
    """
    def __init__(self, atoms=(), gaussians=()):
        atoms = np.asarray(atoms, dtype=float).reshape(-1, 2)
        gaussians = np.asarray(gaussians, dtype=float).reshape(-1, 3)
        if not (np.all(np.isfinite(atoms)) and np.all(np.isfinite(gaussians))):
            raise ConfigError("prior parameters must be finite")
        if np.any(atoms[:, 1] < 0) or np.any(gaussians[:, 0] < 0):
            raise ConfigError("prior weights must be nonnegative")
        total = atoms[:, 1].sum() + gaussians[:, 0].sum()
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ConfigError("prior weights sum to {!r}, expected 1".format(total))
        if np.any(gaussians[:, 2] <= 0):
            raise ConfigError("Gaussian component variances must be positive")
        if len(np.unique(atoms[:, 0])) != len(atoms):
            raise ConfigError("atom values must be distinct")
        self.atoms = tuple((float(v), float(w)) for v, w in atoms)
        self.gaussians = tuple((float(w), float(mu), float(var)) for w, mu, var in gaussians)

        # flat component arrays, atoms carry zero variance
        weight = np.concatenate([atoms[:, 1], gaussians[:, 0]])
        mean = np.concatenate([atoms[:, 0], gaussians[:, 1]])
        var = np.concatenate([np.zeros(len(atoms)), gaussians[:, 2]])
        keep = weight > 0
        self._weight = weight[keep]
        self._mean = mean[keep]
        self._var = var[keep]
        self._log_weight = np.log(self._weight)

    @classmethod
    def gaussian(cls, mean=0.0, var=1.0):
        return cls(gaussians=[(1.0, mean, var)])

    @classmethod
    def point(cls, value=0.0):
        return cls(atoms=[(value, 1.0)])

    @classmethod
    def bernoulli_gaussian(cls, eps, mean=0.0, var=1.0):
        """ Sparse law: 0 with probability 1 - eps, N(mean, var) otherwise. """
        if not 0 <= eps <= 1:
            raise ConfigError("eps must lie in [0, 1], got {!r}".format(eps))
        atoms = [(0.0, 1.0 - eps)] if eps < 1 else []
        gaussians = [(eps, mean, var)] if eps > 0 else []
        return cls(atoms=atoms, gaussians=gaussians)

    @classmethod
    def three_point(cls, eps, amplitude=1.0):
        """ Sparse law: 0 with probability 1 - eps, +-amplitude with eps/2 each. """
        if not 0 < eps <= 1:
            raise ConfigError("eps must lie in (0, 1], got {!r}".format(eps))
        atoms = [(-amplitude, eps / 2), (amplitude, eps / 2)]
        if eps < 1:
            atoms.insert(1, (0.0, 1.0 - eps))
        return cls(atoms=atoms)

    @classmethod
    def from_config(cls, config):
        """ Build a prior from its serialized fragment.

        Accepts the canonical form ``{"atoms": [[v, w], ...], "gaussians":
        [[w, mu, var], ...]}`` or one of the shorthands ``{"gaussian": {...}}``,
        ``{"bernoulli_gaussian": {...}}``, ``{"three_point": {...}}``,
        ``{"point": {...}}`` whose inner mapping holds the constructor keywords.
        """
        if not isinstance(config, dict):
            raise ConfigError("prior config must be a mapping, got {!r}".format(config))
        shorthands = {'gaussian': cls.gaussian, 'point': cls.point,
                      'bernoulli_gaussian': cls.bernoulli_gaussian,
                      'three_point': cls.three_point}
        if len(config) == 1 and next(iter(config)) in shorthands:
            name, kwargs = next(iter(config.items()))
            try:
                return shorthands[name](**(kwargs or {}))
            except TypeError as err:
                raise ConfigError("bad arguments for prior {!r}: {}".format(name, err))
        unknown = set(config) - {'atoms', 'gaussians'}
        if unknown:
            raise ConfigError("unknown prior keys: {}".format(sorted(unknown)))
        return cls(atoms=config.get('atoms', ()), gaussians=config.get('gaussians', ()))

    def to_config(self):
        return {'atoms': [list(a) for a in self.atoms],
                'gaussians': [list(g) for g in self.gaussians]}

    def __repr__(self):
        return "Prior(atoms={!r}, gaussians={!r})".format(self.atoms, self.gaussians)

    def __eq__(self, other):
        if not isinstance(other, Prior):
            return NotImplemented
        return self.atoms == other.atoms and self.gaussians == other.gaussians

    def __hash__(self):
        return hash((self.atoms, self.gaussians))

    def mean(self):
        return float(np.sum(self._weight * self._mean))

    def second_moment(self):
        return float(np.sum(self._weight * (self._var + self._mean ** 2)))

    def variance(self):
        """ Var(X), exact from the mixture moments. """
        mu = self.mean()
        return float(np.sum(self._weight * (self._var + (self._mean - mu) ** 2)))

    def renyi_upper_dimension(self):
        """ Upper Renyi information dimension: the weight of the continuous part. """
        return float(sum(w for w, _, _ in self.gaussians))

    def sample(self, count, seed):
        """ Draw `count` i.i.d. values, deterministic for a fixed `seed`.

        Parameters
        ----------
        count: int
            Number of draws, at least one.
        seed: int or numpy.random.SeedSequence
            Seed of the generator.

        Returns
        -------
        ndarray(float)
            Array of shape (count,).
        """
        if int(count) < 1:
            raise ConfigError("sample count must be positive, got {!r}".format(count))
        rng = np.random.default_rng(seed)
        probs = self._weight / self._weight.sum()
        comp = rng.choice(len(probs), size=int(count), p=probs)
        noise = rng.standard_normal(int(count))
        return self._mean[comp] + np.sqrt(self._var[comp]) * noise

    def _components(self, y, nu):
        """ Per-component posterior pieces at observation `y` and noise `nu`.

        Returns responsibilities, component posterior means and component
        posterior variances, each with a trailing axis over components.
        """
        pred_var = self._var + nu[..., None]
        resid = y[..., None] - self._mean
        log_like = self._log_weight - 0.5 * np.log(2 * np.pi * pred_var) - 0.5 * resid ** 2 / pred_var
        resp = special.softmax(log_like, axis=-1)
        gain = self._var / pred_var
        comp_mean = self._mean + gain * resid
        comp_var = gain * nu[..., None]
        return resp, comp_mean, comp_var

    def denoise(self, y, snr):
        """ Posterior mean, variance and denoiser derivative.

        Computes E{X | X + snr^{-1/2} Z = y} in closed form. `y` and `snr`
        broadcast together; scalar inputs give scalar outputs.

        Parameters
        ----------
        y: float or array_like(float)
            Observation(s).
        snr: float or array_like(float)
            Nonnegative signal-to-noise ratio(s).

        Returns
        -------
        PosteriorStats

        Raises
        ------
        NumericalError
            If `y` is not finite or `snr` is negative or not finite.
        """
        y = np.asarray(y, dtype=float)
        snr = np.asarray(snr, dtype=float)
        if not np.all(np.isfinite(y)):
            raise NumericalError("denoiser input must be finite")
        if not np.all(np.isfinite(snr)) or np.any(snr < 0):
            raise NumericalError("snr must be finite and nonnegative")
        y, snr = np.broadcast_arrays(y, snr)
        silent = snr == 0
        nu = 1.0 / np.where(silent, 1.0, snr)
        resp, comp_mean, comp_var = self._components(y, nu)
        mean = np.sum(resp * comp_mean, axis=-1)
        var = np.sum(resp * (comp_var + (comp_mean - mean[..., None]) ** 2), axis=-1)
        if np.any(silent):
            mean = np.where(silent, self.mean(), mean)
            var = np.where(silent, self.variance(), var)
        deriv = snr * var
        if mean.ndim == 0:
            return PosteriorStats(float(mean), float(var), float(deriv))
        return PosteriorStats(mean, var, deriv)

    def _pair_integrand(self, y, nu, k, l):
        # w_k r_l(y) (m_k(y) - m_l(y))^2, averaged over y ~ p_k
        resp, comp_mean, _ = self._components(y, np.broadcast_to(nu, y.shape))
        return self._weight[k] * resp[..., l] * (comp_mean[..., k] - comp_mean[..., l]) ** 2

    def _pair_spread(self, k, l, nu, nodes):
        """ Between-component spread of the pair (k, l) integrated over y.

        The integrand is taken against the narrower predictive law by
        Gauss-Hermite quadrature. When both components share their variance
        the log-odds between them is linear in y and the integrand equals
        ``sqrt(w_k p_k w_l p_l) / (2 cosh(L / 2))``; once the two means are
        `SHARP_SEPARATION` predictive standard deviations apart the sech is
        narrower than the Gaussian, and the trapezoid rule in v = L / 2 is
        used instead.
        """
        narrow, other = (k, l) if self._var[k] <= self._var[l] else (l, k)
        z, w = gauss_hermite_normal(nodes)
        y = self._mean[narrow] + np.sqrt(self._var[narrow] + nu) * z
        value = np.sum(w * self._pair_integrand(y, nu, narrow, other), axis=-1)
        dmu = self._mean[l] - self._mean[k]
        if self._var[k] != self._var[l] or dmu == 0:
            return value
        pred_var = self._var[k] + nu
        sharp = (abs(dmu) / np.sqrt(pred_var))[..., 0] >= SHARP_SEPARATION
        if not np.any(sharp):
            return value

        # L(y) = lam - dmu (y - mid) / V; the sech sits at v = 0, the
        # Gaussian envelope at v = lam / 2
        lam = self._log_weight[k] - self._log_weight[l]
        mid = 0.5 * (self._mean[k] + self._mean[l])
        v, step = np.linspace(min(0.0, lam / 2) - SECH_HALF_WIDTH,
                              max(0.0, lam / 2) + SECH_HALF_WIDTH, nodes, retstep=True)
        y = mid + (lam - 2 * v) * pred_var / dmu
        jacobian = 2 * pred_var[..., 0] / abs(dmu)
        density = np.exp(-0.5 * (y - self._mean[k]) ** 2 / pred_var) / np.sqrt(2 * np.pi * pred_var)
        trapezoid = step * jacobian * np.sum(density * self._pair_integrand(y, nu, k, l), axis=-1)
        return np.where(sharp, trapezoid, value)

    def _mmse_quadrature(self, snr, nodes):
        # within-component variance is constant in y; the between-component
        # variance splits into pairwise terms
        nu = 1.0 / snr[..., None]
        total = np.sum(self._weight * self._var * nu / (self._var + nu), axis=-1)
        ncomp = len(self._weight)
        for k in range(ncomp):
            for l in range(k + 1, ncomp):
                total = total + self._pair_spread(k, l, nu, nodes)
        return total

    def mmse(self, snr, nodes=DEFAULT_NODES, check=True, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL):
        """ Minimum mean square error of X from sqrt(snr) X + Z.

        Parameters
        ----------
        snr: float or array_like(float)
            Nonnegative signal-to-noise ratio(s).
        nodes: int
            Number of Gauss-Hermite nodes (optional, default=127).
        check: bool
            If True, recompute with twice the nodes and raise when the two
            values disagree beyond `rtol`, `atol`.

        Returns
        -------
        float or ndarray(float)

        Raises
        ------
        QuadratureError
            If the doubled-node check fails.
        """
        snr = np.asarray(snr, dtype=float)
        if not np.all(np.isfinite(snr)) or np.any(snr < 0):
            raise NumericalError("snr must be finite and nonnegative")
        silent = snr == 0
        safe = np.where(silent, 1.0, snr)
        value = self._mmse_quadrature(safe, nodes)
        if check:
            fine = self._mmse_quadrature(safe, 2 * nodes)
            if not np.allclose(value, fine, rtol=rtol, atol=atol):
                raise QuadratureError(value, fine)
        value = np.where(silent, self.variance(), np.clip(value, 0.0, None))
        if value.ndim == 0:
            return float(value)
        return value


def variance(prior):
    return prior.variance()


def denoise(prior, y, snr):
    return prior.denoise(y, snr)


def mmse(prior, snr, nodes=DEFAULT_NODES, check=True, rtol=DEFAULT_RTOL, atol=DEFAULT_ATOL):
    return prior.mmse(snr, nodes=nodes, check=check, rtol=rtol, atol=atol)


def sample(prior, count, seed):
    return prior.sample(count, seed)


def renyi_upper_dimension(prior):
    return prior.renyi_upper_dimension()
