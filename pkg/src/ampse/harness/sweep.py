""" Sweeps over the undersampling ratio delta. """
import logging
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..amp import make_cs_problem, run_problem
from ..ensemble import CouplingMatrix, EnsembleSpec
from ..io import IO
from ..se import converged_mse, coupled_se_run, critical_delta
from .config import config_hash
from .experiments import Outcome

_logger = logging.getLogger(__name__)

IID_COUPLING = CouplingMatrix([[1.0]])


def sweep_gate(delta_sc, delta_iid, dimension, rate, tol, gap):
    """ Named checks on the critical deltas, each with slack `tol`.

    `lower`, `ordering` and `gap` gate the sweep: the coupled critical delta
    lies in [dimension, delta_iid] and at most `gap` above the dimension.
    `rate` compares the overall m / n at delta_sc with the dimension and is
    reported only.

    Returns
    -------
    dict(str, bool)
        The four checks and `passed`.
    """
    checks = {
        'lower': dimension - tol <= delta_sc,
        'ordering': delta_sc <= delta_iid + tol,
        'gap': delta_sc - dimension <= gap + tol,
        'rate': dimension - tol <= rate,
    }
    checks = {name: bool(value) for name, value in checks.items()}
    checks['passed'] = checks['lower'] and checks['ordering'] and checks['gap']
    return checks


def _monte_carlo_mse(config, coupling, prior, delta):
    """ Trial mean of the largest final block MSE at m0 = round(delta n0). """
    m0 = max(1, int(round(delta * config.n0)))
    spec = EnsembleSpec(coupling, m0, config.n0)
    schedule = coupled_se_run(coupling, spec.delta, config.noise_var, prior, config.iterations,
                              **config.quadrature.kwargs())
    worst = []
    for k in range(config.trials):
        problem = make_cs_problem(spec, prior, config.noise_var, config.seed + k, schedule,
                                  max_entries=config.max_entries)
        worst.append(float(np.max(run_problem(problem, config.iterations).final_block_mse)))
    return float(np.mean(worst))


def run_delta_sweep(config):
    """ Phase curve of the converged state evolution MSE over ``sweep.deltas``.

    For every delta the largest block MSE at the fixed point is recorded,
    with a Monte Carlo confirmation at the deltas listed in ``sweep.mc_deltas``.
    The critical delta of the configured coupling is located by bisection;
    with ``compare_iid`` the uncoupled one is located too and `sweep_gate`
    decides the outcome.

    Writes the curve to ``config.output`` and the critical values to
    ``<stem>_critical.csv``.
    """
    sweep = config.sweep
    digest = config_hash(config)
    prior = config.build_prior()
    coupling = config.build_coupling()
    se_kwargs = dict(max_iterations=sweep.max_iterations, stop_tol=sweep.stop_tol,
                     **config.quadrature.kwargs())

    records = []
    for delta in tqdm(sweep.deltas, desc='deltas', disable=not _logger.isEnabledFor(logging.INFO)):
        mse_se = converged_mse(coupling, delta, config.noise_var, prior, **se_kwargs)
        mse_mc = np.nan
        if np.any(np.isclose(delta, sweep.mc_deltas, rtol=1e-12, atol=0)):
            mse_mc = _monte_carlo_mse(config, coupling, prior, delta)
        _logger.debug("delta=%g: SE %.6g, MC %.6g", delta, mse_se, mse_mc)
        records.append({'config_hash': digest, 'delta': delta, 'mse_se': mse_se, 'mse_mc': mse_mc})
    curve = pd.DataFrame.from_records(records, columns=['config_hash', 'delta', 'mse_se', 'mse_mc'])

    bisect = dict(tol=sweep.bisect_tol, **se_kwargs)
    critical = {'coupled': critical_delta(coupling, config.noise_var, prior, sweep.threshold,
                                          sweep.bisect_lo, sweep.bisect_hi, **bisect)}
    passed = True
    if sweep.compare_iid:
        critical['iid'] = critical_delta(IID_COUPLING, config.noise_var, prior, sweep.threshold,
                                         sweep.bisect_lo, sweep.bisect_hi, **bisect)
        # bisection brackets are accurate to bisect_tol
        dimension = prior.renyi_upper_dimension()
        rate = critical['coupled'] * coupling.Lr / coupling.Lc
        checks = sweep_gate(critical['coupled'], critical['iid'], dimension, rate,
                            sweep.bisect_tol, sweep.gap)
        passed = checks['passed']
        _logger.info("critical delta: coupled %.4f, iid %.4f, information dimension %.4f",
                     critical['coupled'], critical['iid'], dimension)
        _logger.info("sweep gate %s, checks %s", 'passed' if passed else 'failed',
                     {name: ok for name, ok in checks.items() if name != 'passed'})
    shapes = {'coupled': coupling, 'iid': IID_COUPLING}
    table = pd.DataFrame.from_records(
        [{'config_hash': digest, 'coupling': name, 'threshold': sweep.threshold,
          'delta_critical': value, 'rate_critical': value * shapes[name].Lr / shapes[name].Lc}
         for name, value in critical.items()],
        columns=['config_hash', 'coupling', 'threshold', 'delta_critical', 'rate_critical'])

    io = IO(Path(config.output))
    outputs = [io.write(curve), io.write(table, 'critical')]
    return Outcome(kind='sweep', config_hash=digest, passed=bool(passed), outputs=outputs)
