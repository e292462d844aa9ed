"""Tests for generalized CCA in population and sample modes."""

import warnings

import numpy as np
import pytest

from dgcca.dataset import Matrix
from dgcca.errors import ArityError, DegenerateSpectrumWarning, NumericsError, ShapeError
from dgcca.gcca import covariance_gcca, population_gcca, sample_gcca, stopping_index
from dgcca.signal import signal_from_matrix, soft_threshold_svd
from dgcca.simulation import compound_symmetric_cov, multi_factor_cov

# Printed to two or three decimals; 2.8, 0.415 and 0.4 are 2.7990, 0.4149 and 0.4015.
MULTI_FACTOR_SPECTRUM = (3.0, 2.8, 2.25, 1.5, 1.0, 1.0, 1.0, 1.0, 0.635, 0.415, 0.4, 0.0, 0.0, 0.0, 0.0)
# Pairwise correlations no random vector can have.
NOT_PSD = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])


class TestStoppingIndex:
    def test_counts_values_above_one(self):
        assert stopping_index([2.5, 1.2, 1.0, 0.3]) == 2

    def test_tolerance(self):
        assert stopping_index([1.0 + 1e-12, 0.9]) == 0

    def test_none_above_one(self):
        assert stopping_index([1.0, 0.5]) == 0


class TestPopulationGcca:
    def test_multi_factor_spectrum(self):
        model = population_gcca(multi_factor_cov(), (5, 5, 5))
        np.testing.assert_allclose(model.eigenvalues, MULTI_FACTOR_SPECTRUM, atol=5e-3)
        assert model.L == 4

    def test_unit_eigenvalues_from_rounded_constants_are_not_counted(self):
        model = population_gcca(multi_factor_cov(), (5, 5, 5))
        np.testing.assert_allclose(model.eigenvalues[4:8], 1.0, atol=1e-8)
        assert model.L == 4
        assert stopping_index(model.eigenvalues, 1e-8 * model.eigenvalues[0]) == 4

    @pytest.mark.parametrize("theta", [10, 50, 80])
    def test_compound_symmetric_spectrum(self, theta):
        c = np.cos(np.radians(theta))
        model = population_gcca(compound_symmetric_cov(theta), (1, 1, 1))
        np.testing.assert_allclose(model.eigenvalues, [1 + 2 * c, 1 - c, 1 - c], atol=1e-12)
        assert model.L == 1

    def test_eigenvalues_sum_to_total_rank(self):
        model = population_gcca(multi_factor_cov(), (5, 5, 5))
        assert model.eigenvalues.sum() == pytest.approx(15.0)

    def test_population_cosines(self):
        model = population_gcca(compound_symmetric_cov(30), (1, 1, 1))
        # Every view contributes equally to the leading stage.
        np.testing.assert_allclose(model.cos_wz(0), np.sqrt(model.eigenvalues[0] / 3), atol=1e-12)
        np.testing.assert_allclose(np.diag(model.cos_zz(0)), 1.0, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            population_gcca(np.eye(4), (1, 2))

    def test_asymmetric(self):
        cov = np.eye(2)
        cov[0, 1] = 0.5
        with pytest.raises(NumericsError):
            population_gcca(cov, (1, 1))

    def test_diagonal_blocks_must_be_identity(self):
        with pytest.raises(NumericsError):
            population_gcca(2 * np.eye(2), (1, 1))

    def test_not_psd(self):
        with pytest.raises(NumericsError):
            population_gcca(NOT_PSD, (1, 1, 1))

    def test_partial_scores_need_samples(self):
        model = population_gcca(compound_symmetric_cov(30), (1, 1, 1))
        with pytest.raises(ArityError):
            model.partial_scores(0)


class TestSampleGcca:
    def test_identities(self, single_factor):
        _, dataset, _ = single_factor
        signals = [soft_threshold_svd(view, 1) for view in dataset.views]
        model = sample_gcca(signals)
        n = dataset.n
        assert model.eigenvalues.sum() == pytest.approx(3.0)
        for l in range(model.r_f_hat):
            # w has unit variance and the cosine identity holds exactly.
            assert model.w_scores[l] @ model.w_scores[l] / n == pytest.approx(1.0)
            np.testing.assert_allclose(
                model.cos_wz(l),
                np.sqrt(model.eigenvalues[l]) * model.block_norms(l),
                atol=1e-10,
            )

    def test_leading_stage_is_common(self, single_factor):
        _, dataset, _ = single_factor
        model = sample_gcca([soft_threshold_svd(view, 1) for view in dataset.views])
        assert model.L == 1
        assert model.eigenvalues[0] > 2.0

    def test_z_scores_unit_variance(self, multi_factor):
        _, dataset, _ = multi_factor
        model = sample_gcca([soft_threshold_svd(view, 5) for view in dataset.views])
        for l in range(model.L):
            np.testing.assert_allclose(np.diag(model.cos_zz(l)), 1.0, atol=1e-10)

    def test_factor_rows_lie_in_auxiliary_span(self, multi_factor):
        _, dataset, _ = multi_factor
        model = sample_gcca([soft_threshold_svd(view, 5) for view in dataset.views])
        w = model.w_scores[: model.r_f_hat]
        np.testing.assert_allclose(w @ w.T / dataset.n, np.eye(model.r_f_hat), atol=1e-10)
        for block in model.factor_blocks:
            residual = block - (block @ w.T / dataset.n) @ w
            assert np.linalg.norm(residual) <= 1e-8 * np.linalg.norm(block)

    def test_auxiliary_and_canonical_scores_never_obtuse(self, multi_factor):
        _, dataset, _ = multi_factor
        model = sample_gcca([soft_threshold_svd(view, 5) for view in dataset.views])
        for l in range(model.r_f_hat):
            assert np.all(model.cos_wz(l) >= -1e-10)

    def test_no_signals(self):
        with pytest.raises(ArityError):
            sample_gcca([])

    def test_sample_count_mismatch(self, rng):
        a = soft_threshold_svd(Matrix(rng.standard_normal((6, 20))), 1)
        b = soft_threshold_svd(Matrix(rng.standard_normal((6, 30))), 1)
        with pytest.raises(ShapeError):
            sample_gcca([a, b])

    def test_identical_views_warn_about_ties(self, rng):
        x = Matrix(rng.standard_normal((2, 50)))
        signal = signal_from_matrix(x)
        with pytest.warns(DegenerateSpectrumWarning):
            model = sample_gcca([signal, signal])
        assert model.eigenvalues[:2] == pytest.approx([2.0, 2.0])

    def test_distinct_spectrum_does_not_warn(self, single_factor):
        _, dataset, _ = single_factor
        signals = [soft_threshold_svd(view, 1) for view in dataset.views]
        with warnings.catch_warnings():
            warnings.simplefilter("error", DegenerateSpectrumWarning)
            sample_gcca(signals)


class TestCovarianceGcca:
    def test_matches_sample_eigenvalues(self, single_factor):
        _, dataset, _ = single_factor
        sample = sample_gcca([soft_threshold_svd(view, 1) for view in dataset.views])
        model = covariance_gcca(sample.cov_f, sample.block_sizes)
        np.testing.assert_allclose(model.eigenvalues, sample.eigenvalues, atol=1e-12)
        np.testing.assert_allclose(model.cos_wz(0), sample.cos_wz(0), atol=1e-8)
