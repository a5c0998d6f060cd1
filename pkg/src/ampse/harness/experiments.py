""" Experiments comparing AMP runs with their state evolution predictions.

Each `run_*` function takes a validated `ExperimentConfig`, writes its CSV
tables next to ``config.output`` and returns an `Outcome`. Trial k of an
experiment uses the seed ``config.seed + k``.
"""
import logging
import time
from dataclasses import dataclass, field
from multiprocessing import Pool
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..amp import (SymmetricInstance, make_cs_problem, nonlinearity_from_config, run_embedding_checks,
                   run_problem, symmetric_amp_run)
from ..ensemble import block_rng, sample_symmetric_matrix
from ..exceptions import AmpSeError, ConfigError
from ..io import IO
from ..se import (coupled_se_run, expectation, general_se_run, initial_sigma_hat,
                  schedule_frame, side_info_from_config, sigma_frame,
                  verify_diagonal_identity)
from .config import config_hash

_logger = logging.getLogger(__name__)

EMBED_MAX_ROWS = 200
SIDE_INFO_STREAM = 1

TEST_FUNCTIONS = {
    'x': lambda z: z,
    'x2': lambda z: z ** 2,
    'abs': np.abs,
}


@dataclass
class Outcome:
    """ Result of one experiment: gate status and the files written. """
    kind: str
    config_hash: str
    passed: bool
    outputs: list = field(default_factory=list)
    failed_trials: int = 0


@dataclass
class TrialResult:
    """ Per-(t, block) MSE of one trial, arrays of shape (T, L_c). """
    seed: int
    mse_empirical: np.ndarray = field(default=None, repr=False)
    mse_predicted: np.ndarray = field(default=None, repr=False)
    wall_time: float = 0.0
    error: str = None

    @property
    def ok(self):
        return self.error is None


def _show_progress():
    return _logger.isEnabledFor(logging.INFO)


def _run_trial(task):
    config, schedule, seed = task
    start = time.perf_counter()
    T = config.iterations
    try:
        problem = make_cs_problem(config.ensemble_spec(), config.build_prior(), config.noise_var,
                                  seed, schedule, max_entries=config.max_entries)
        trace = run_problem(problem, T)
    except AmpSeError as err:
        return TrialResult(seed=seed, wall_time=time.perf_counter() - start,
                           error="{}: {}".format(type(err).__name__, err))
    predicted = np.vstack([schedule.psi_at(t) for t in range(1, T + 1)])
    return TrialResult(seed=seed, mse_empirical=trace.block_mse()[:T], mse_predicted=predicted,
                       wall_time=time.perf_counter() - start)


def run_trials(config, schedule):
    """ Run ``config.trials`` compressed sensing trials, in trial order.

    Trials are spread over ``config.threads`` processes when more than one
    is requested; failures are returned as `TrialResult` with `error` set.
    """
    tasks = [(config, schedule, config.seed + k) for k in range(config.trials)]
    progress = dict(total=len(tasks), desc='trials', disable=not _show_progress())
    if config.threads > 1:
        with Pool(min(config.threads, len(tasks))) as pool:
            results = list(tqdm(pool.imap(_run_trial, tasks), **progress))
    else:
        results = [_run_trial(task) for task in tqdm(tasks, **progress)]
    for result in results:
        if not result.ok:
            _logger.warning("trial with seed %d failed: %s", result.seed, result.error)
    return results


def trials_frame(results, digest):
    """ Long table ``config_hash, seed, t, block, mse_emp, mse_se, rel_err``. """
    records = []
    for result in results:
        if not result.ok:
            continue
        T, Lc = result.mse_empirical.shape
        for t in range(1, T + 1):
            for block in range(Lc):
                emp = result.mse_empirical[t - 1, block]
                se = result.mse_predicted[t - 1, block]
                records.append({'config_hash': digest, 'seed': result.seed, 't': t,
                                'block': block, 'mse_emp': emp, 'mse_se': se,
                                'rel_err': abs(emp - se) / se})
    return pd.DataFrame.from_records(
        records, columns=['config_hash', 'seed', 't', 'block', 'mse_emp', 'mse_se', 'rel_err'])


def summary_frame(frame, tolerances, digest):
    """ Cross-trial aggregate per (t, block) with the acceptance gate.

    A cell passes when the trial mean lies within
    ``max(rel * mse_se, sigma * mse_std)`` of the prediction, with `rel`
    replaced by `t1_rel` at t = 1.
    """
    columns = ['config_hash', 't', 'block', 'mse_mean', 'mse_std', 'mse_se', 'rel_err', 'passed']
    if frame.empty:
        return pd.DataFrame(columns=columns)
    grouped = frame.groupby(['t', 'block'], sort=True)
    summary = grouped.agg(mse_mean=('mse_emp', 'mean'), mse_se=('mse_se', 'first')).reset_index()
    summary['mse_std'] = grouped['mse_emp'].std(ddof=1).fillna(0.0).to_numpy()
    gap = (summary['mse_mean'] - summary['mse_se']).abs()
    summary['rel_err'] = gap / summary['mse_se']
    rel = np.where(summary['t'] == 1, tolerances.t1_rel, tolerances.rel)
    allowed = np.maximum(rel * summary['mse_se'], tolerances.sigma * summary['mse_std'])
    summary['passed'] = (gap <= allowed).to_numpy()
    summary.insert(0, 'config_hash', digest)
    return summary[columns]


def _schedule(config, T=None):
    return coupled_se_run(config.build_coupling(), config.delta, config.noise_var,
                          config.build_prior(), config.iterations if T is None else T,
                          **config.quadrature.kwargs())


def run_cs_monte_carlo(config):
    """ Monte Carlo check of per-block AMP MSE against the coupled state evolution.

    Writes the per-trial table to ``config.output`` and the aggregate to
    ``<stem>_summary.csv``.

    Returns
    -------
    Outcome
        Passed when every (t, block) gate holds and no trial failed.
    """
    digest = config_hash(config)
    _logger.info("cs_mc %s: %d trials, m=%d n=%d, T=%d", digest, config.trials,
                 config.ensemble_spec().m, config.ensemble_spec().n, config.iterations)
    schedule = _schedule(config)
    results = run_trials(config, schedule)
    failed = sum(not r.ok for r in results)
    frame = trials_frame(results, digest)
    summary = summary_frame(frame, config.tolerances, digest)

    io = IO(Path(config.output))
    outputs = [io.write(frame), io.write(summary, 'summary')]
    passed = failed == 0 and not summary.empty and bool(summary['passed'].all())
    _logger.info("cs_mc %s: %d/%d cells pass, %d failed trials", digest,
                 int(summary['passed'].sum()) if not summary.empty else 0, len(summary), failed)
    return Outcome(kind='cs_mc', config_hash=digest, passed=passed, outputs=outputs,
                   failed_trials=failed)


def run_se_only(config):
    """ Write the coupled state evolution schedule as ``t, kind, index, value`` rows. """
    digest = config_hash(config)
    frame = schedule_frame(_schedule(config))
    frame.insert(0, 'config_hash', digest)
    outputs = [IO(Path(config.output)).write(frame)]
    return Outcome(kind='se_only', config_hash=digest, passed=True, outputs=outputs)


def run_embed_check(config):
    """ Check the compressed sensing, bipartite and symmetric orbits against each other.

    Every trial seed builds one instance; both identities are reported with
    their largest deviation and the first failing (i, t).
    """
    spec = config.ensemble_spec()
    if spec.m > EMBED_MAX_ROWS:
        raise ConfigError("embedding checks need m <= {}, got {}".format(EMBED_MAX_ROWS, spec.m))
    digest = config_hash(config)
    prior = config.build_prior()
    schedule = _schedule(config)
    records = []
    for k in range(config.trials):
        seed = config.seed + k
        problem = make_cs_problem(spec, prior, config.noise_var, seed, schedule,
                                  max_entries=config.max_entries)
        for report in run_embedding_checks(problem, config.iterations, seed,
                                           tol=config.tolerances.embed):
            first_i, first_t = report.first_failure or (-1, -1)
            records.append({'config_hash': digest, 'seed': seed, 'identity': report.name,
                            'max_deviation': report.max_deviation, 'first_i': first_i,
                            'first_t': first_t, 'passed': report.passed()})
            _logger.info("%s identity, seed %d: max deviation %.3g", report.name, seed,
                         report.max_deviation)
    frame = pd.DataFrame.from_records(
        records, columns=['config_hash', 'seed', 'identity', 'max_deviation', 'first_i',
                          'first_t', 'passed'])
    outputs = [IO(Path(config.output)).write(frame)]
    return Outcome(kind='embed_check', config_hash=digest, passed=bool(frame['passed'].all()),
                   outputs=outputs)


def _group_sizes(fractions, N):
    sizes = [int(round(c * N)) for c in fractions]
    sizes[-1] = N - sum(sizes[:-1])
    if min(sizes) < 1:
        raise ConfigError("N = {} is too small for group fractions {}".format(N, fractions))
    return sizes


def _symmetric_instance(general, nonlinearity, samplers, seed):
    sizes = _group_sizes(general.group_fractions, general.N)
    initial_rows = np.asarray(general.initial, dtype=float)
    side = np.vstack([samplers[a](size, block_rng(seed, SIDE_INFO_STREAM, a))
                      for a, size in enumerate(sizes)])
    return SymmetricInstance(matrix=sample_symmetric_matrix(general.N, seed),
                             group_sizes=tuple(sizes), side_info=side, nonlinearity=nonlinearity,
                             initial=np.repeat(initial_rows, sizes, axis=0))


def _orbit_records(config, digest):
    general = config.general
    q = len(general.group_fractions)
    T = config.iterations
    tol = config.tolerances
    if config.trials < 2:
        raise ConfigError("the orbit check needs at least two trials for a cross-seed spread")
    unknown = set(general.test_functions) - set(TEST_FUNCTIONS)
    if unknown:
        raise ConfigError("unknown test functions {}, choose from {}".format(
            sorted(unknown), sorted(TEST_FUNCTIONS)))
    nonlinearity = nonlinearity_from_config(general.nonlinearity)
    samplers = [side_info_from_config(s, q) for s in general.side_info]

    hats, _ = initial_sigma_hat(nonlinearity, general.initial, samplers,
                                mc_samples=general.mc_samples, seed=config.seed)
    states = general_se_run(general.group_fractions, samplers, nonlinearity, hats, T,
                            mc_samples=general.mc_samples, seed=config.seed,
                            threads=config.threads)

    # empirical[name][k_trial, t-1, a] holds per-coordinate group means of psi(x^t)
    empirical = {name: np.empty((config.trials, T, q, q)) for name in general.test_functions}
    moments = np.empty((config.trials, T, q, q))
    seeds = [config.seed + k for k in range(config.trials)]
    for k, seed in enumerate(tqdm(seeds, desc='orbits', disable=not _show_progress())):
        instance = _symmetric_instance(general, nonlinearity, samplers, seed)
        trace = symmetric_amp_run(instance, T)
        groups = instance.groups
        for t in range(1, T + 1):
            x = trace.state(t)
            moments[k, t - 1] = np.diagonal(trace.moments(t), axis1=1, axis2=2)
            for name in general.test_functions:
                values = TEST_FUNCTIONS[name](x)
                for a in range(q):
                    empirical[name][k, t - 1, a] = values[groups == a].mean(axis=0)

    records = []
    for t, state in enumerate(states, start=1):
        for a in range(q):
            for coord in range(q):
                emp = moments[:, t - 1, a, coord].mean()
                pred = state.sigma[coord, coord]
                allowed = tol.rel * abs(pred)
                records.append({'config_hash': digest, 'check': 'orbit', 't': t, 'group': a,
                                'coordinate': coord, 'statistic': 'second_moment',
                                'empirical': emp, 'predicted': pred, 'tolerance': allowed,
                                'passed': abs(emp - pred) <= allowed})
            for name in general.test_functions:
                func = TEST_FUNCTIONS[name]
                pred, pred_err = expectation(state, a, lambda z, side, func=func: func(z), samplers[a],
                                             mc_samples=general.mc_samples, seed=config.seed)
                spread = empirical[name][:, t - 1, a]
                std = spread.std(axis=0, ddof=1) if config.trials > 1 else np.zeros(q)
                for coord in range(q):
                    emp = spread[:, coord].mean()
                    allowed = tol.sigma * np.hypot(std[coord], pred_err[coord])
                    records.append({'config_hash': digest, 'check': 'orbit', 't': t, 'group': a,
                                    'coordinate': coord, 'statistic': name, 'empirical': emp,
                                    'predicted': pred[coord], 'tolerance': allowed,
                                    'passed': abs(emp - pred[coord]) <= allowed})
    return records, states


def _diagonal_records(config, digest):
    T = config.general.diagonal_iterations
    report = verify_diagonal_identity(config.build_coupling(), config.delta, config.noise_var,
                                      config.build_prior(), T,
                                      mc_samples=config.general.mc_samples, seed=config.seed,
                                      threads=config.threads)
    tol = config.tolerances.diagonal
    records = []
    for t in range(1, T + 1):
        for a in range(report.deviations.shape[1]):
            records.append({'config_hash': digest, 'check': 'diagonal', 't': t, 'group': a,
                            'coordinate': a, 'statistic': 'inverse_sigma',
                            'empirical': report.inverse_sigma[t - 1, a],
                            'predicted': report.effective_snr[t - 1, a], 'tolerance': tol,
                            'passed': report.deviations[t - 1, a] < tol})
    return records


def run_general_se_check(config):
    """ Compare symmetric orbits and the diagonal identity with the general state evolution.

    The orbit check runs ``config.trials`` symmetric orbits built from the
    ``general`` section and compares, per group and coordinate, the group
    second moments with the diagonal of Sigma^t (relative tolerance `rel`) and
    the group means of each test function with its Gaussian expectation
    (within `sigma` cross-seed standard deviations, Monte Carlo error
    included). The diagonal check runs `verify_diagonal_identity` on the
    compressed sensing part of the config.
    """
    digest = config_hash(config)
    records = []
    states = []
    if config.general.check_orbit:
        orbit, states = _orbit_records(config, digest)
        records += orbit
    if config.general.check_diagonal:
        records += _diagonal_records(config, digest)
    frame = pd.DataFrame.from_records(
        records, columns=['config_hash', 'check', 't', 'group', 'coordinate', 'statistic',
                          'empirical', 'predicted', 'tolerance', 'passed'])
    io = IO(Path(config.output))
    outputs = [io.write(frame)]
    if states:
        schedule = sigma_frame(states)
        schedule.insert(0, 'config_hash', digest)
        outputs.append(io.write(schedule, 'schedule'))
    passed = bool(frame['passed'].all())
    _logger.info("general SE check %s: %d/%d rows pass", digest, int(frame['passed'].sum()),
                 len(frame))
    return Outcome(kind='general_se_check', config_hash=digest, passed=passed, outputs=outputs)
