""" Exceptions raised by `ampse`.

All errors raised on purpose by the library derive from `AmpSeError`, so the
command line interface can tell them apart from genuine bugs.
"""


class AmpSeError(Exception):
    """ Base class for all `ampse` errors. """


class ConfigError(AmpSeError, ValueError):
    """ Invalid prior, coupling matrix, ensemble or experiment configuration. """


class DimensionError(AmpSeError, ValueError):
    """ Shapes of matrices, vectors, schedules or Jacobians do not agree. """


class NumericalError(AmpSeError, ArithmeticError):
    """ An input or intermediate quantity left the numeric domain. """


class QuadratureError(NumericalError):
    """ Gauss-Hermite quadrature did not converge under node doubling.

    Parameters
    ----------
    coarse: float or array_like(float)
        Value obtained with the configured number of nodes.
    fine: float or array_like(float)
        Value obtained with twice as many nodes.
    """
    def __init__(self, coarse, fine, message=None):
        self.coarse = coarse
        self.fine = fine
        if message is None:
            message = "quadrature did not converge: {!r} (n nodes) vs {!r} (2n nodes)".format(
                coarse, fine)
        super().__init__(message)


class DivergenceError(NumericalError):
    """ An AMP orbit produced non-finite or exploding entries.

    Parameters
    ----------
    iteration: int
        Iteration index at which the orbit left the admissible range.
    """
    def __init__(self, iteration, message=None):
        self.iteration = iteration
        if message is None:
            message = "orbit diverged at iteration {}".format(iteration)
        super().__init__(message)
