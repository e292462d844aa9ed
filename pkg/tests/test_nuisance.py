"""Tests for test-based nuisance parameter selection."""

import numpy as np
import pytest

from dgcca import nuisance
from dgcca.config import SelectionConfig
from dgcca.dataset import Matrix
from dgcca.decomposition import AlphaCandidate
from dgcca.errors import ConfigError, DegenerateSpectrumWarning
from dgcca.gcca import sample_gcca
from dgcca.params import Provenance, all_pairs
from dgcca.signal import signal_from_matrix, soft_threshold_svd

FAST = SelectionConfig(bootstrap=200, rank_bootstrap=50, seed=7)


@pytest.fixture(scope="module")
def single_factor_model(single_factor):
    _, dataset, _ = single_factor
    return sample_gcca([soft_threshold_svd(view, 1) for view in dataset.views])


class TestStages:
    def test_select_L(self, single_factor_model):
        log = nuisance.TestLog()
        assert nuisance.select_L(single_factor_model, 0.05, log) == 1
        assert log.records
        assert all(record.stage == "L" for record in log.records)

    def test_select_I0(self, single_factor_model):
        assert nuisance.select_I0(single_factor_model, 1, 0.05) == (0,)

    def test_select_I0_with_no_stages(self, single_factor_model):
        assert nuisance.select_I0(single_factor_model, 0, 0.05) == ()

    def test_r_star_trivial_cases(self, single_factor_model):
        assert nuisance.select_r_star(single_factor_model, ()) == (0, 0, 0)
        assert nuisance.select_r_star(single_factor_model, (0,)) == (1, 1, 1)

    def test_r_star_within_bounds(self, multi_factor):
        _, dataset, truth = multi_factor
        model = sample_gcca([soft_threshold_svd(view, 5) for view in dataset.views])
        log = nuisance.TestLog()
        estimates = nuisance.select_r_star(model, truth.params.I0, FAST, log)
        assert all(1 <= r <= len(truth.params.I0) for r in estimates)
        if len(truth.params.I0) > 1:
            assert "r_star" in log.notes

    def test_delta_sets_single_factor(self, single_factor_model):
        pos, zero = nuisance.select_delta_sets(single_factor_model, (0,), 0.05)
        assert set(pos[0]) | set(zero[0]) <= {(0, 1), (0, 2), (1, 2)}
        assert not set(pos[0]) & set(zero[0])

    def test_identical_views_go_to_zero_set(self, rng):
        signal = signal_from_matrix(Matrix(np.outer(rng.standard_normal(4), rng.standard_normal(40))))
        model = sample_gcca([signal, signal, signal])
        with pytest.warns(DegenerateSpectrumWarning):
            pos, zero = nuisance.select_delta_sets(model, (0,), 0.05)
        assert pos[0] == ()
        assert set(zero[0]) == {(0, 1), (0, 2), (1, 2)}

    def test_select_L_nondecreasing_in_level(self, multi_factor):
        _, dataset, _ = multi_factor
        model = sample_gcca([soft_threshold_svd(view, 5) for view in dataset.views])
        chosen = [nuisance.select_L(model, alpha) for alpha in (0.001, 0.01, 0.05, 0.2, 0.5)]
        assert chosen == sorted(chosen)

    def test_r_star_finds_two_shared_directions(self, two_level_views):
        views, _, _, _ = two_level_views
        model = sample_gcca([soft_threshold_svd(view, 2) for view in views])
        assert model.L == 2
        log = nuisance.TestLog()
        assert nuisance.select_r_star(model, (0, 1), FAST, log) == (2, 2, 2)
        assert "r_star" in log.notes

    def test_mixed_delta_sets(self):
        n = 300
        gen = np.random.default_rng(17)
        raw = gen.standard_normal((n, 6))
        q, _ = np.linalg.qr(raw - raw.mean(axis=0))
        u = np.sqrt(n) * q.T
        # Views 0-3 share one direction; (0, 1) and (2, 3) are closer than it allows.
        corr = np.array(
            [[1.0, 0.9, 0.3, 0.3], [0.9, 1.0, 0.3, 0.3], [0.3, 0.3, 1.0, 0.95], [0.3, 0.3, 0.95, 1.0]]
        )
        z = np.vstack([np.linalg.cholesky(corr) @ u[:4], u[4:]])
        model = sample_gcca([signal_from_matrix(Matrix(np.outer(gen.standard_normal(6), z_k))) for z_k in z])
        assert model.eigenvalues[0] == pytest.approx(2.5)
        with pytest.warns(DegenerateSpectrumWarning):
            pos, zero = nuisance.select_delta_sets(model, (0,), 0.05)
        assert zero[0] == ((4, 5),)
        assert set(pos[0]) == set(all_pairs(6)) - {(0, 1), (2, 3), (4, 5)}

    def test_sign_needs_enough_resamples(self, single_factor_model):
        with pytest.raises(ConfigError):
            nuisance.select_sign(single_factor_model, (0,), {}, B=50)

    def test_single_sign_skips_bootstrap(self, single_factor_model):
        candidates = {0: {(0, 1): AlphaCandidate((0, 1), 0.1, 0.1, 0.4, True)}}
        log = nuisance.TestLog()
        assert nuisance.select_sign(single_factor_model, (0,), candidates, B=100, log=log) == {0: 1}
        assert "sign" not in log.notes

    def test_mixed_signs_run_bootstrap(self, single_factor_model):
        candidates = {
            0: {
                (0, 1): AlphaCandidate((0, 1), 0.1, 0.1, 0.4, True),
                (0, 2): AlphaCandidate((0, 2), 0.1, 0.1, -0.6, True),
            }
        }
        log = nuisance.TestLog()
        signs = nuisance.select_sign(single_factor_model, (0,), candidates, B=100, config=FAST, log=log)
        assert signs[0] in (-1, 1)
        assert log.notes["sign"]["0"]["resamples"] == 100


class TestSelectAll:
    def test_recovers_single_factor_truth(self, single_factor):
        _, dataset, truth = single_factor
        report = nuisance.select_all(dataset, FAST, overrides={"ranks": [1, 1, 1]})
        assert report.params.matches(truth.params)["all"]
        assert report.params.provenance is Provenance.SELECTED
        assert report.params.alpha_level == FAST.alpha

    def test_report_serializes_tests(self, single_factor):
        _, dataset, _ = single_factor
        record = nuisance.select_all(dataset, FAST, overrides={"ranks": [1, 1, 1]}).to_dict()
        assert record["seed"] == FAST.seed
        assert {test["stage"] for test in record["tests"]} >= {"L", "I0"}
        assert all("p_value" in test or test.get("degenerate") for test in record["tests"])

    def test_full_override_runs_no_tests(self, single_factor):
        _, dataset, truth = single_factor
        params = truth.params
        overrides = {
            "ranks": params.ranks,
            "L": params.L,
            "I0": params.I0,
            "r_star": params.r_star,
            "delta_pos": params.delta_pos,
            "delta_zero": params.delta_zero,
            "alpha_signs": params.alpha_signs,
        }
        report = nuisance.select_all(dataset, FAST, overrides=overrides)
        assert report.tests == ()
        assert report.params.provenance is Provenance.USER
        assert report.params.matches(params)["all"]

    def test_orthogonal_factor_scores_select_no_stage(self, rng):
        raw = rng.standard_normal((200, 3))
        scores, _ = np.linalg.qr(raw - raw.mean(axis=0))
        signals = [
            signal_from_matrix(Matrix(np.outer(rng.standard_normal(8), scores[:, k])))
            for k in range(3)
        ]
        report = nuisance.select_from_signals(signals, FAST)
        np.testing.assert_allclose(report.model.eigenvalues, 1.0, atol=1e-10)
        assert report.params.L == 0
        assert report.params.I0 == ()
        assert report.params.r_star == (0, 0, 0)
