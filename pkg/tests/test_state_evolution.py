import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from ampse.amp import IdentityNonlinearity, LinearNonlinearity, TanhNonlinearity
from ampse.ensemble import CouplingMatrix, band_coupling, sc_coupling
from ampse.exceptions import ConfigError, DimensionError, NumericalError
from ampse.priors import Prior
from ampse.se import (ConstantSideInfo, RademacherSideInfo, converged_mse, coupled_se_run,
                      critical_delta, embedding_se_instance, expectation, first_passage_times,
                      general_se_run, initial_sigma_hat, predicted_block_mse, psd_sqrt,
                      schedule_frame, side_info_from_config, sigma_frame,
                      verify_diagonal_identity)

IID = CouplingMatrix([[1.0]])


class TestCoupledSeRun(object):
    def test_gaussian_closed_form(self, gaussian_prior):
        schedule = coupled_se_run(IID, 0.5, 0.2, gaussian_prior, 10, stop_tol=0.0)
        assert schedule.phi_at(1)[0] == pytest.approx(2.2, abs=1e-12)
        assert schedule.psi_at(2)[0] == pytest.approx(0.6875, abs=1e-10)
        psi = 1.0
        for t in range(1, 11):
            assert schedule.psi_at(t)[0] == pytest.approx(psi, abs=1e-10)
            phi = 0.2 + psi / 0.5
            assert schedule.phi_at(t)[0] == pytest.approx(phi, abs=1e-10)
            psi = phi / (1.0 + phi)

    def test_initial_sentinel(self, bg_prior):
        schedule = coupled_se_run(band_coupling(3, 3, [1, 1]), 0.5, 1e-3, bg_prior, 3)
        assert np.all(np.isinf(schedule.psi_at(0)))
        assert_array_equal(schedule.s_at(0), 0.0)
        assert_allclose(schedule.psi_at(1), bg_prior.variance())
        with pytest.raises(DimensionError):
            schedule.q_at(0)

    def test_psi_is_nonincreasing(self, bg_prior):
        schedule = coupled_se_run(sc_coupling(3, 16), 0.3, 1e-4, bg_prior, 60)
        assert np.all(np.diff(schedule.psi[1:], axis=0) <= 1e-12)

    def test_q_identity(self, bg_prior):
        W = band_coupling(5, 4, [2, 1])
        schedule = coupled_se_run(W, 0.4, 1e-3, bg_prior, 8)
        for t in range(1, 9):
            assert_allclose(np.sum(W.entries * schedule.q_at(t), axis=0), 1.0, atol=1e-12)

    def test_converged_schedule_extends(self, gaussian_prior):
        schedule = coupled_se_run(IID, 0.5, 0.2, gaussian_prior, 1000)
        assert schedule.converged and schedule.last < 1000
        assert_array_equal(schedule.psi_at(5000), schedule.fixed_point())

    def test_unconverged_schedule_ends(self, bg_prior):
        schedule = coupled_se_run(IID, 0.5, 1e-3, bg_prior, 3)
        assert not schedule.converged
        with pytest.raises(DimensionError):
            schedule.phi_at(10)

    def test_noiseless_floor(self, bg_prior):
        schedule = coupled_se_run(IID, 0.8, 0.0, bg_prior, 400)
        assert np.all(schedule.phi[1:] > 0)

    def test_three_point_prior_converges(self):
        # the posterior crossovers between atoms sharpen as the snr grows
        schedule = coupled_se_run(IID, 0.5, 1e-4, Prior.three_point(0.1), 60)
        assert np.all(np.diff(schedule.psi[1:], axis=0) <= 1e-12)
        assert np.max(schedule.fixed_point()) < 1e-6

    def test_invalid_arguments(self, bg_prior):
        with pytest.raises(ConfigError):
            coupled_se_run(IID, 0.0, 0.1, bg_prior, 3)
        with pytest.raises(ConfigError):
            coupled_se_run(IID, 0.5, -0.1, bg_prior, 3)

    def test_coupling_dominates_iid(self, bg_prior):
        # every column of a seeded coupling sums to at least one
        W = sc_coupling(4, 12)
        for delta in (0.15, 0.2, 0.3, 0.5):
            coupled = coupled_se_run(W, delta, 1e-4, bg_prior, 40, stop_tol=0.0)
            iid = coupled_se_run(IID, delta, 1e-4, bg_prior, 40, stop_tol=0.0)
            for t in range(1, 41):
                assert np.max(coupled.psi_at(t)) <= iid.psi_at(t)[0] * (1 + 1e-9) + 1e-12

    def test_predicted_block_mse(self, bg_prior):
        schedule = coupled_se_run(band_coupling(3, 3, [1, 0.5]), 0.4, 1e-3, bg_prior, 5)
        for t in range(1, 6):
            for block in range(3):
                assert predicted_block_mse(schedule, block, t) == pytest.approx(
                    schedule.psi_at(t)[block], rel=1e-12)
        with pytest.raises(DimensionError):
            predicted_block_mse(schedule, 3, 1)


class TestScheduleExports(object):
    def test_frame(self, bg_prior):
        schedule = coupled_se_run(band_coupling(3, 3, [1, 0.5]), 0.5, 1e-3, bg_prior, 4,
                                  stop_tol=0.0)
        frame = schedule_frame(schedule)
        assert list(frame.columns) == ['t', 'kind', 'index', 'value']
        assert set(frame['kind']) == {'phi', 'psi'}
        assert frame['t'].min() == 1
        assert len(frame) == (schedule.phi.shape[0] - 1) * 6

    def test_first_passage(self, bg_prior):
        schedule = coupled_se_run(sc_coupling(3, 16), 0.3, 1e-4, bg_prior, 600)
        times = first_passage_times(schedule, 1e-3)
        assert np.all(times > 0)
        # both seeded ends lead, the two waves meet in the bulk
        peak = int(np.argmax(times))
        assert np.all(np.diff(times[:peak + 1]) >= 0)
        assert np.all(np.diff(times[peak:]) <= 0)
        assert np.all(first_passage_times(schedule, -1.0) == -1)

    def test_sigma_frame(self):
        samplers = [ConstantSideInfo([0.0, 0.0])] * 2
        states = general_se_run([0.5, 0.5], samplers, IdentityNonlinearity(),
                                np.stack([np.diag([1.0, 2.0])] * 2), 3, mc_samples=1000)
        frame = sigma_frame(states)
        assert list(frame.columns) == ['t', 'kind', 'index', 'value']
        assert set(frame['kind']) == {'sigma_diag'}
        assert len(frame) == 6
        first = frame[frame['t'] == 1]
        assert_allclose(first['value'], [1.0, 2.0])


class TestSweepHelpers(object):
    def test_gaussian_has_no_transition(self, gaussian_prior):
        values = [converged_mse(IID, d, 0.01, gaussian_prior) for d in (0.2, 0.4, 0.6, 0.8, 1.0)]
        assert np.all(np.array(values) > 0)
        assert np.all(np.diff(values) < 0)

    def test_bracket_errors(self, bg_prior):
        with pytest.raises(ConfigError):
            critical_delta(IID, 1e-6, bg_prior, 1e-4, 0.5, 0.2)
        with pytest.raises(NumericalError):
            critical_delta(IID, 1e-6, bg_prior, 1e-4, 0.02, 0.05, max_iterations=200)

    def test_iid_critical_delta_above_sparsity(self, bg_prior):
        delta = critical_delta(IID, 1e-6, bg_prior, 1e-4, 0.02, 1.0, tol=1e-3, max_iterations=3000)
        assert delta > 0.1

    @pytest.mark.slow
    def test_coupling_lowers_critical_delta(self, bg_prior):
        W = sc_coupling(5, 32)
        kwargs = dict(tol=1e-3, max_iterations=4000)
        iid = critical_delta(IID, 1e-6, bg_prior, 1e-4, 0.02, 1.0, **kwargs)
        coupled = critical_delta(W, 1e-6, bg_prior, 1e-4, 0.02, 1.0, **kwargs)
        rate = coupled * W.Lr / W.Lc
        assert 0.1 - 1e-3 <= rate
        assert 0.1 - 1e-3 <= coupled <= iid + 1e-3
        assert coupled - 0.1 <= 0.1 + 1e-3


class TestGeneralSe(object):
    def test_psd_sqrt(self):
        sigma = np.array([[2.0, 1.0], [1.0, 2.0]])
        root = psd_sqrt(sigma)
        assert_allclose(root @ root, sigma, atol=1e-12)
        assert_allclose(psd_sqrt(np.zeros((2, 2))), 0.0)
        with pytest.raises(NumericalError):
            psd_sqrt(np.array([[1.0, 0.0], [0.0, -1.0]]))

    def test_side_info_config(self):
        rng = np.random.default_rng(0)
        assert isinstance(side_info_from_config({'kind': 'rademacher'}, 2), RademacherSideInfo)
        constant = side_info_from_config({'kind': 'constant', 'value': [1.0, 2.0]}, 2)
        assert_array_equal(constant(3, rng), [[1.0, 2.0]] * 3)
        gaussian = side_info_from_config({'kind': 'gaussian', 'index': 1, 'var': 4.0}, 2)
        draws = gaussian(10_000, rng)
        assert_array_equal(draws[:, 0], 0.0)
        assert draws[:, 1].var() == pytest.approx(4.0, rel=0.05)
        with pytest.raises(ConfigError):
            side_info_from_config({'kind': 'poisson'}, 1)

    def test_identity_keeps_sigma(self):
        samplers = [ConstantSideInfo([0.0])]
        g = IdentityNonlinearity()
        hats, _ = initial_sigma_hat(g, [[1.0]], samplers, mc_samples=10_000)
        assert_allclose(hats, 1.0)
        states = general_se_run([1.0], samplers, g, hats, 4, mc_samples=200_000, seed=2,
                                batch_size=20_000)
        for state in states:
            assert state.sigma[0, 0] == pytest.approx(1.0, rel=0.02)
            assert np.all(state.stderr < 0.01)

    def test_side_information_passthrough(self):
        # g = y with Rademacher y keeps Sigma at the identity whatever the input
        samplers = [RademacherSideInfo(1)]
        g = TanhNonlinearity(scale=0.0, side=1.0)
        hats, _ = initial_sigma_hat(g, [[3.0]], samplers, mc_samples=1000)
        assert_allclose(hats, 1.0)
        states = general_se_run([1.0], samplers, g, hats, 4, mc_samples=1000)
        for state in states:
            assert state.sigma[0, 0] == pytest.approx(1.0, abs=1e-12)
            assert_allclose(state.sigma_hat, 1.0)

    def test_linear_recursion(self):
        G = np.array([[[0.8, 0.3], [0.0, 0.9]],
                      [[0.6, -0.2], [0.4, 0.7]]])
        c = np.array([0.5, 0.5])
        samplers = [ConstantSideInfo([0.0, 0.0])] * 2
        states = general_se_run(c, samplers, LinearNonlinearity(G), np.stack([np.eye(2)] * 2), 4,
                                mc_samples=400_000, seed=5, batch_size=50_000)
        expected = np.eye(2)
        for state in states:
            assert_allclose(state.sigma, expected, rtol=0, atol=0.02 * np.abs(expected).max())
            # the next state is linear in the sampled one
            expected = sum(c[b] * G[b] @ state.sigma @ G[b].T for b in range(2))

    def test_thread_count_does_not_change_result(self):
        samplers = [RademacherSideInfo(2)] * 2
        g = TanhNonlinearity()
        hats, _ = initial_sigma_hat(g, [[1.0, 0.0], [0.0, 1.0]], samplers, mc_samples=20_000)
        serial = general_se_run([0.3, 0.7], samplers, g, hats, 3, mc_samples=50_000, seed=1,
                                batch_size=10_000)
        threaded = general_se_run([0.3, 0.7], samplers, g, hats, 3, mc_samples=50_000, seed=1,
                                  batch_size=10_000, threads=4)
        for a, b in zip(serial, threaded):
            assert_array_equal(a.sigma, b.sigma)

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            general_se_run([0.5, 0.4], [ConstantSideInfo([0.0, 0.0])] * 2,
                           IdentityNonlinearity(), np.zeros((2, 2, 2)), 1)

    def test_centred_expectation(self):
        samplers = [RademacherSideInfo(1)]
        g = TanhNonlinearity()
        hats, _ = initial_sigma_hat(g, [[0.5]], samplers, mc_samples=50_000)
        state = general_se_run([1.0], samplers, g, hats, 2, mc_samples=50_000)[-1]
        mean, err = expectation(state, 0, lambda z, side: z, samplers[0], mc_samples=200_000,
                               batch_size=20_000)
        assert abs(mean[0]) < 4 * err[0] + 1e-3


class TestDiagonalIdentity(object):
    def test_embedding_instance(self, bg_prior):
        W = band_coupling(3, 3, [1.0, 0.5])
        schedule = coupled_se_run(W, 0.5, 0.01, bg_prior, 3)
        instance = embedding_se_instance(W, 0.5, 0.01, bg_prior, schedule)
        assert instance.q == 6
        assert instance.group_fractions.sum() == pytest.approx(1.0)

    def test_single_block(self, bg_prior):
        report = verify_diagonal_identity(IID, 0.5, 0.01, bg_prior, 6, mc_samples=200_000,
                                          seed=3)
        assert report.deviations.shape == (6, 1)
        assert report.q_identity_error < 1e-12
        assert report.passed(0.02)

    def test_gaussian_single_block(self, gaussian_prior):
        report = verify_diagonal_identity(IID, 0.5, 0.2, gaussian_prior, 4, mc_samples=200_000)
        assert report.max_deviation < 0.02

    @pytest.mark.slow
    def test_band(self, bg_prior):
        W = band_coupling(3, 3, [1.0, 0.5])
        report = verify_diagonal_identity(W, 0.5, 0.01, bg_prior, 6, mc_samples=1_000_000,
                                          threads=4)
        assert report.passed(0.02)
