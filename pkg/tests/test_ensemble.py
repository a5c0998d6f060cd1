import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from ampse.ensemble import (CouplingMatrix, EnsembleSpec, band_coupling, sample_sensing_matrix,
                            sample_symmetric_matrix, sc_coupling, validate_coupling)
from ampse.exceptions import ConfigError, NumericalError


class TestValidateCoupling(object):
    def test_identity_block(self):
        assert validate_coupling([[1.0]])

    def test_light_row(self):
        report = validate_coupling([[0.1, 0.1], [1.0, 1.0]])
        assert not report
        assert report.bad_rows == (0,)

    def test_empty_column(self):
        report = validate_coupling([[1.0, 0.0], [1.0, 0.0]])
        assert not report.ok
        assert report.empty_columns == (1,)

    def test_constructor_raises_on_violation(self):
        with pytest.raises(ConfigError):
            CouplingMatrix([[1.0, 0.0], [1.0, 0.0]])

    def test_entries_are_read_only(self, small_coupling):
        with pytest.raises(ValueError):
            small_coupling.entries[0, 0] = 2.0


class TestBandCoupling(object):
    def test_single_block(self):
        assert_array_equal(band_coupling(1, 1, [1.0]).entries, [[1.0]])

    def test_three_blocks(self):
        expected = [[1 / 2, 1 / 2, 0], [1 / 3, 1 / 3, 1 / 3], [0, 1 / 2, 1 / 2]]
        assert_allclose(band_coupling(3, 3, [1, 1]).entries, expected, rtol=1e-15)

    def test_rectangular(self):
        W = band_coupling(5, 4, [2, 1]).entries
        assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
        lag = np.abs(np.arange(5)[:, None] - np.arange(4)[None, :])
        assert_array_equal(W > 0, lag <= 1)

    def test_profile_too_long(self):
        with pytest.raises(ConfigError):
            band_coupling(2, 2, [1, 1, 1])

    def test_config_forms(self):
        band = CouplingMatrix.from_config({'band': {'Lr': 3, 'Lc': 3, 'profile': [1, 1]}})
        assert CouplingMatrix.from_config(band.to_config()) == band
        with pytest.raises(ConfigError):
            CouplingMatrix.from_config({'rows': [[1.0]], 'Lr': 2})


class TestScCoupling(object):
    def test_shape_and_support(self):
        W = sc_coupling(3, 16)
        assert (W.Lr, W.Lc) == (18, 16)
        assert_allclose(W.entries.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(W.entries[:3, 0] > 0) and np.all(W.entries[3:, 0] == 0)


class TestSensingMatrix(object):
    def test_dimensions_and_groups(self, small_spec):
        A = sample_sensing_matrix(small_spec, 0)
        assert A.shape == (20, 40)
        assert small_spec.delta == 0.5
        assert_array_equal(small_spec.row_groups(), np.repeat([0, 1], 10))
        assert_array_equal(small_spec.col_groups(), np.repeat([0, 1], 20))

    def test_reproducible(self, small_spec):
        assert_array_equal(sample_sensing_matrix(small_spec, 5).values,
                           sample_sensing_matrix(small_spec, 5).values)

    def test_zero_block(self):
        spec = EnsembleSpec(CouplingMatrix([[1.0, 0.0], [0.5, 0.5]]), 4, 6)
        A = sample_sensing_matrix(spec, 1).values
        assert np.all(A[:4, 6:] == 0.0)

    def test_single_block_variance(self):
        spec = EnsembleSpec(CouplingMatrix([[1.0]]), 2, 4)
        entries = np.concatenate([sample_sensing_matrix(spec, s).values.ravel()
                                  for s in range(2000)])
        # the variance of a sample variance of normals is 2 v^2 / k
        assert abs(entries.var() - 0.5) < 4 * 0.5 * np.sqrt(2.0 / entries.size)

    def test_block_variances(self):
        W = CouplingMatrix([[0.8, 0.2], [0.4, 1.2]])
        spec = EnsembleSpec(W, 200, 300)
        A = sample_sensing_matrix(spec, 3).values
        for r in range(2):
            for c in range(2):
                block = A[spec.row_slice(r), spec.col_slice(c)]
                target = W.entries[r, c] / spec.m0
                assert abs(block.var() - target) < 4 * target * np.sqrt(2.0 / block.size)

    def test_column_norms(self):
        W = CouplingMatrix([[0.8, 0.2], [0.4, 1.2]])
        spec = EnsembleSpec(W, 100, 50)
        norms = np.mean([np.sum(sample_sensing_matrix(spec, s).values ** 2, axis=0)
                         for s in range(40)], axis=0)
        expected = W.entries.sum(axis=0)[spec.col_groups()]
        # each squared column norm is a sum of m0 scaled chi-squares per row block
        spread = np.sqrt(2.0 * np.sum(W.entries ** 2, axis=0)[spec.col_groups()] / spec.m0 / 40)
        assert np.all(np.abs(norms - expected) < 4 * spread)

    def test_memory_cap(self, small_spec):
        with pytest.raises(NumericalError):
            sample_sensing_matrix(small_spec, 0, max_entries=100)

    def test_products_are_gaussian(self):
        # entries of sqrt(m) A u are N(0, |u|^2) for a fixed unit-variance block and fixed u
        spec = EnsembleSpec(CouplingMatrix([[1.0]]), 20, 40)
        u = np.linspace(-1.0, 1.0, 40)
        u /= np.linalg.norm(u)
        draws = np.concatenate([np.sqrt(spec.m) * (sample_sensing_matrix(spec, s).values @ u)
                                for s in range(2000)])
        assert draws.size == 40_000
        assert abs(draws.mean()) < 4 / np.sqrt(draws.size)
        assert abs(draws.var() - 1.0) < 4 * np.sqrt(2.0 / draws.size)
        assert stats.kstest(draws, 'norm').pvalue > 1e-3

    def test_normalized_quadratic_form(self):
        # <A u, A u> tracks <u, u> for a unit-variance single block
        spec = EnsembleSpec(CouplingMatrix([[1.0]]), 10_000, 400)
        A = sample_sensing_matrix(spec, 2).values
        u = np.random.default_rng(0).standard_normal(400)
        u /= np.linalg.norm(u)
        assert np.sum((A @ u) ** 2) == pytest.approx(1.0, rel=0.05)


class TestSymmetricMatrix(object):
    def test_symmetric(self):
        A = sample_symmetric_matrix(50, 4)
        assert_array_equal(A, A.T)

    def test_entry_variances(self):
        N = 1000
        A = sample_symmetric_matrix(N, 7)
        off = A[np.triu_indices(N, k=1)]
        diag = np.diag(A)
        assert abs(off.var() - 1.0 / N) < 4 * (1.0 / N) * np.sqrt(2.0 / off.size)
        assert abs(np.mean(diag ** 2) - 2.0 / N) < 4 * (2.0 / N) * np.sqrt(2.0 / N)
