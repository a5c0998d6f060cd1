from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from ampse.cli import cli
from ampse.exceptions import ConfigError
from ampse.harness import (ExperimentConfig, config_hash, load_config, run_experiment,
                           summary_frame, sweep_gate)
from ampse.harness.config import Tolerances
from ampse.io import IO, read_yaml

CONFIGS = Path(__file__).resolve().parents[1] / 'configs'

CS_MC = {
    'kind': 'cs_mc',
    'prior': {'gaussian': {'mean': 0.0, 'var': 1.0}},
    'coupling': {'rows': [[1.0]]},
    'm0': 250,
    'n0': 500,
    'noise_var': 0.2,
    'iterations': 4,
    'trials': 3,
    'seed': 10,
}

EMBED = {
    'kind': 'embed_check',
    'prior': {'bernoulli_gaussian': {'eps': 0.2}},
    'coupling': {'rows': [[0.7, 0.3], [0.3, 0.7]]},
    'm0': 10,
    'n0': 20,
    'noise_var': 0.01,
    'iterations': 4,
    'trials': 2,
}


class TestExperimentConfig(object):
    def test_defaults_validate(self):
        config = ExperimentConfig().validate()
        assert config.delta == 0.5

    def test_unknown_keys(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'kind': 'cs_mc', 'trails': 3})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'tolerances': {'relative': 0.1}})

    def test_yaml_exponents_are_coerced(self):
        config = ExperimentConfig.from_dict({'noise_var': '1e-4', 'tolerances': {'embed': '1e-8'}})
        assert config.noise_var == 1e-4
        assert isinstance(config.tolerances, Tolerances)
        assert config.tolerances.embed == 1e-8

    def test_bad_values(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'trials': 2.5})
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'trials': 0}).validate()
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'kind': 'plot'}).validate()
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'coupling': {'rows': [[0.1]]}}).validate()

    def test_round_trip_and_hash(self):
        config = ExperimentConfig.from_dict(dict(CS_MC, sweep={'deltas': [0.2, '0.3']}))
        again = ExperimentConfig.from_dict(config.to_dict())
        assert again == config
        assert config_hash(again) == config_hash(config)
        assert len(config_hash(config)) == 12
        assert config_hash(config.replace(seed=11)) != config_hash(config)

    def test_replace_ignores_none(self):
        config = ExperimentConfig.from_dict(CS_MC)
        assert config.replace(seed=None, trials=7).trials == 7
        assert config.replace(seed=None).seed == 10

    @pytest.mark.parametrize('path', sorted(CONFIGS.glob('*.yaml')), ids=lambda p: p.stem)
    def test_bundled_configs_load(self, path):
        assert load_config(path).kind in path.read_text()


class TestIO(object):
    def test_read_yaml_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            read_yaml(tmp_path / 'missing.yaml')
        bad = tmp_path / 'bad.yaml'
        bad.write_text('- a\n- b\n')
        with pytest.raises(ConfigError):
            read_yaml(bad)

    def test_needs_path(self):
        with pytest.raises(ConfigError):
            IO('results.csv')

    def test_csv_format(self, tmp_path):
        io = IO(tmp_path / 'out' / 'results.csv')
        path = io.write(pd.DataFrame({'a': [0.1], 'b': [1]}), 'summary')
        assert path == tmp_path / 'out' / 'results_summary.csv'
        assert path.read_bytes() == b'a,b\n0.10000000000000001,1\n'


class TestSummaryFrame(object):
    def test_gate(self):
        frame = pd.DataFrame({'t': [1, 1, 2, 2], 'block': [0] * 4,
                              'mse_emp': [1.02, 1.04, 0.5, 0.9], 'mse_se': [1.0, 1.0, 0.6, 0.6]})
        summary = summary_frame(frame, Tolerances(rel=0.1, sigma=3.0, t1_rel=0.05), 'abc')
        assert list(summary['passed']) == [True, True]
        assert summary['mse_mean'].tolist() == pytest.approx([1.03, 0.7])
        strict = summary_frame(frame, Tolerances(rel=0.01, sigma=0.0, t1_rel=0.01), 'abc')
        assert not strict['passed'].any()


class TestRunExperiment(object):
    def test_cs_monte_carlo(self, tmp_path):
        config = ExperimentConfig.from_dict(dict(CS_MC, output=str(tmp_path / 'cs.csv'))).validate()
        outcome = run_experiment(config)
        frame = pd.read_csv(tmp_path / 'cs.csv')
        assert list(frame.columns) == ['config_hash', 'seed', 't', 'block', 'mse_emp', 'mse_se',
                                       'rel_err']
        assert sorted(frame['seed'].unique()) == [10, 11, 12]
        assert len(frame) == 3 * 4
        # the prediction is shared by all trials
        assert frame.groupby('t')['mse_se'].nunique().max() == 1
        summary = pd.read_csv(tmp_path / 'cs_summary.csv')
        assert len(summary) == 4
        assert outcome.passed == bool(summary['passed'].all())

    def test_bit_identical_reruns(self, tmp_path):
        first = ExperimentConfig.from_dict(dict(CS_MC, output=str(tmp_path / 'a.csv'))).validate()
        second = first.replace(output=str(tmp_path / 'b.csv'), threads=2)
        run_experiment(first)
        run_experiment(second)
        a = pd.read_csv(tmp_path / 'a.csv').drop(columns='config_hash')
        b = pd.read_csv(tmp_path / 'b.csv').drop(columns='config_hash')
        pd.testing.assert_frame_equal(a, b, check_exact=True)

    def test_se_only(self, tmp_path):
        config = ExperimentConfig.from_dict(dict(CS_MC, kind='se_only',
                                                 output=str(tmp_path / 'se.csv'))).validate()
        assert run_experiment(config).passed
        frame = pd.read_csv(tmp_path / 'se.csv')
        assert list(frame.columns) == ['config_hash', 't', 'kind', 'index', 'value']
        psi2 = frame.query("kind == 'psi' and t == 2")['value'].iloc[0]
        assert psi2 == pytest.approx(0.6875, abs=1e-10)

    def test_embed_check(self, tmp_path):
        config = ExperimentConfig.from_dict(dict(EMBED, output=str(tmp_path / 'e.csv'))).validate()
        outcome = run_experiment(config)
        assert outcome.passed
        frame = pd.read_csv(tmp_path / 'e.csv')
        assert set(frame['identity']) == {'bipartite', 'symmetric'}
        assert (frame['max_deviation'] < 1e-6).all()
        assert (frame['first_i'] == -1).all()

    def test_embed_check_size_limit(self, tmp_path):
        config = ExperimentConfig.from_dict(dict(EMBED, m0=150, output=str(tmp_path / 'e.csv')))
        with pytest.raises(ConfigError):
            run_experiment(config.validate())

    def test_sweep(self, tmp_path):
        config = ExperimentConfig.from_dict({
            'kind': 'sweep',
            'prior': {'bernoulli_gaussian': {'eps': 0.1}},
            'coupling': {'sc': {'omega': 2, 'Lambda': 4}},
            'n0': 200,
            'noise_var': 1e-6,
            'iterations': 30,
            'trials': 2,
            'output': str(tmp_path / 'sweep.csv'),
            'sweep': {'deltas': [0.3, 0.6], 'mc_deltas': [0.6], 'compare_iid': True,
                      'bisect_tol': 1e-2, 'max_iterations': 1000, 'gap': 1.0},
        }).validate()
        outcome = run_experiment(config)
        assert outcome.passed
        curve = pd.read_csv(tmp_path / 'sweep.csv')
        assert np.isnan(curve['mse_mc'].iloc[0]) and np.isfinite(curve['mse_mc'].iloc[1])
        assert curve['mse_se'].iloc[1] <= curve['mse_se'].iloc[0]
        critical = pd.read_csv(tmp_path / 'sweep_critical.csv')
        assert list(critical['coupling']) == ['coupled', 'iid']

    def test_sweep_gate(self):
        ok = sweep_gate(0.12, 0.3, 0.1, 0.14, 1e-3, 0.1)
        assert ok == {'lower': True, 'ordering': True, 'gap': True, 'rate': True,
                      'passed': True}
        # within the bisection slack on every side
        assert sweep_gate(0.0995, 0.0990, 0.1, 0.0995, 1e-3, 0.1)['passed']
        assert sweep_gate(0.2005, 0.3, 0.1, 0.25, 1e-3, 0.1)['passed']
        below = sweep_gate(0.09, 0.3, 0.1, 0.12, 1e-3, 0.1)
        assert not below['lower'] and below['rate'] and not below['passed']
        assert not sweep_gate(0.35, 0.3, 0.1, 0.4, 1e-3, 0.5)['passed']
        wide = sweep_gate(0.25, 0.3, 0.1, 0.28, 1e-3, 0.1)
        assert wide['ordering'] and not wide['gap'] and not wide['passed']
        # the overall rate is reported, it does not decide the outcome
        low_rate = sweep_gate(0.12, 0.3, 0.1, 0.05, 1e-3, 0.1)
        assert not low_rate['rate'] and low_rate['passed']

    def test_sweep_gap_must_be_nonnegative(self):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({'kind': 'sweep',
                                        'sweep': {'deltas': [0.3], 'gap': -0.1}}).validate()

    def test_general_se_check_layout(self, tmp_path):
        config = ExperimentConfig.from_dict({
            'kind': 'general_se_check',
            'prior': {'gaussian': {'mean': 0.0, 'var': 1.0}},
            'noise_var': 0.2,
            'iterations': 2,
            'trials': 3,
            'output': str(tmp_path / 'g.csv'),
            'general': {'N': 500, 'mc_samples': 20_000, 'diagonal_iterations': 2},
        }).validate()
        outcome = run_experiment(config)
        frame = pd.read_csv(tmp_path / 'g.csv')
        assert set(frame['check']) == {'orbit', 'diagonal'}
        assert set(frame['statistic']) == {'second_moment', 'x', 'x2', 'abs', 'inverse_sigma'}
        assert frame['tolerance'].gt(0).all()
        schedule = pd.read_csv(tmp_path / 'g_schedule.csv', dtype={'config_hash': str})
        assert outcome.outputs[-1] == tmp_path / 'g_schedule.csv'
        assert list(schedule.columns) == ['config_hash', 't', 'kind', 'index', 'value']
        assert set(schedule['kind']) == {'sigma_diag'}
        assert set(schedule['t']) == {1, 2}
        assert (schedule['config_hash'] == outcome.config_hash).all()


class TestCli(object):
    def test_validate(self, write_config):
        result = CliRunner().invoke(cli, ['validate', str(write_config(CS_MC))])
        assert result.exit_code == 0
        assert 'cs_mc experiment' in result.output

    def test_config_error_exit_code(self, write_config):
        result = CliRunner().invoke(cli, ['run', str(write_config(dict(CS_MC, trials=0)))])
        assert result.exit_code == 2

    def test_check_embed(self, write_config, tmp_path):
        path = write_config(dict(EMBED, kind='cs_mc'))
        result = CliRunner().invoke(cli, ['check', 'embed', str(path), '--seed', '3'])
        assert result.exit_code == 0
        frame = pd.read_csv(tmp_path / 'experiment.csv')
        assert sorted(frame['seed'].unique()) == [3, 4]

    def test_failing_gate_exit_code(self, write_config, tmp_path):
        path = write_config(dict(CS_MC, tolerances={'rel': 0.0, 'sigma': 0.0, 't1_rel': 0.0}))
        out = tmp_path / 'override.csv'
        result = CliRunner().invoke(cli, ['-v', 'run', str(path), '--trials', '2', '--out', str(out)])
        assert result.exit_code == 1
        assert out.exists()
        assert len(pd.read_csv(out)['seed'].unique()) == 2


@pytest.mark.slow
class TestAcceptance(object):
    def _run(self, name, tmp_path, **overrides):
        config = load_config(CONFIGS / name).replace(output=str(tmp_path / 'out.csv'), **overrides)
        return run_experiment(config.validate())

    def test_coupled_monte_carlo(self, tmp_path):
        assert self._run('cs_mc_coupled.yaml', tmp_path).passed

    def test_gaussian_monte_carlo(self, tmp_path):
        assert self._run('cs_mc_gaussian.yaml', tmp_path).passed

    def test_embedding(self, tmp_path):
        assert self._run('embed_check.yaml', tmp_path).passed

    def test_general_state_evolution(self, tmp_path):
        assert self._run('general_se_check.yaml', tmp_path).passed

    def test_phase_transition(self, tmp_path):
        assert self._run('sweep_phase.yaml', tmp_path).passed
