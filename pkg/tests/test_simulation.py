"""Tests for simulated setups, ground truth and replication studies."""

import math

import numpy as np
import pandas as pd
import pytest

from dgcca.config import SelectionConfig, StudyConfig
from dgcca.decomposition import decompose
from dgcca.errors import ConfigError
from dgcca.simulation import (
    FIXED_DIMS,
    SetupSpec,
    generate,
    loadings,
    population_truth,
    run_study,
    view_metrics,
)


class TestSetupSpec:
    def test_equal_dimensions(self):
        spec = SetupSpec.create("2.1", p1=400, sigma2=2.0)
        assert spec.p == (400, 400, 400)
        assert spec.sigma2 == (2.0, 2.0, 2.0)
        assert spec.rank == 5

    def test_fixed_views(self):
        spec = SetupSpec.create("1.2", p1=100, sigma2=4.0)
        assert spec.p == (100, *FIXED_DIMS)
        assert spec.sigma2 == (4.0, 1.0, 1.0)
        assert spec.rank == 1

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"setup_id": "3.1", "p": (10, 10, 10), "sigma2": (1.0, 1.0, 1.0)},
            {"setup_id": "1.1", "p": (10, 10), "sigma2": (1.0, 1.0)},
            {"setup_id": "2.1", "p": (4, 10, 10), "sigma2": (1.0, 1.0, 1.0)},
            {"setup_id": "1.1", "p": (10, 10, 10), "sigma2": (-1.0, 1.0, 1.0)},
            {"setup_id": "1.1", "p": (10, 10, 10), "sigma2": (1.0, 1.0, 1.0), "theta": 120.0},
            {"setup_id": "1.1", "p": (10, 10, 10), "sigma2": (1.0, 1.0, 1.0), "n": 1},
            {"setup_id": "1.2", "p": (10, 10, 10), "sigma2": (1.0, 1.0, 1.0)},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            SetupSpec(**kwargs)

    def test_snr(self):
        spec = SetupSpec.create("1.1", p1=500, sigma2=1.0)
        assert spec.snr() == pytest.approx((1.0, 1.0, 1.0))
        assert SetupSpec.create("1.1", sigma2=0.0).snr()[0] == math.inf

    def test_to_dict(self):
        record = SetupSpec.create("2.2", p1=300, seed=4).to_dict()
        assert record == {"setup": "2.2", "p": [300, 300, 900], "sigma2": [1.0, 1.0, 1.0], "theta": None, "n": 300, "seed": 4}


class TestGenerate:
    def test_loadings_orthonormal_and_shared(self):
        spec = SetupSpec.create("2.1", p1=50)
        v = loadings(spec)
        np.testing.assert_allclose(v[0].T @ v[0], np.eye(5), atol=1e-12)
        assert v[0] is v[1]
        assert not v[0].flags.writeable

    def test_noiseless_views_equal_signal(self):
        spec = SetupSpec.create("1.1", p1=30, sigma2=0.0, n=50, seed=2)
        dataset, truth = generate(spec)
        for view, x, c, d in zip(dataset.views, truth.x, truth.c, truth.d):
            np.testing.assert_array_equal(view.values, x)
            np.testing.assert_allclose(c + d, x)
            assert np.linalg.matrix_rank(x) == 1

    def test_views_are_centered(self, multi_factor):
        _, dataset, _ = multi_factor
        assert dataset.is_centered()
        assert dataset.dims == (80, 80, 80)
        assert dataset.names == ("view1", "view2", "view3")

    def test_replications_are_reproducible(self):
        spec = SetupSpec.create("1.2", p1=20, n=40, seed=9)
        first, _ = generate(spec, replication=3)
        again, _ = generate(spec, replication=3)
        other, _ = generate(spec, replication=4)
        np.testing.assert_array_equal(first.views[0].values, again.views[0].values)
        assert not np.array_equal(first.views[0].values, other.views[0].values)

    def test_truth_matches_population(self, single_factor):
        spec, _, truth = single_factor
        np.testing.assert_allclose(truth.pve_view_c, population_truth(spec).pve_view_c)
        assert truth.params.I0 == (0,)
        for var in truth.pve_var_c:
            # One factor per view: every variable shares the view-level value.
            np.testing.assert_allclose(var, truth.pve_view_c[0], atol=1e-10)

    def test_common_part_spans_one_direction(self, single_factor):
        _, _, truth = single_factor
        for c in truth.c:
            assert np.linalg.matrix_rank(c, tol=1e-8 * np.abs(c).max()) == 1


class TestViewMetrics:
    def test_noiseless_signal_error(self):
        spec = SetupSpec.create("1.1", p1=30, sigma2=0.0, n=80, seed=1)
        dataset, truth = generate(spec)
        rows = view_metrics(decompose(dataset, truth.params), truth)
        assert [row["view"] for row in rows] == ["view1", "view2", "view3"]
        for row in rows:
            assert row["err_x"] < 1e-12
            assert row["err_c"] == pytest.approx(row["err_d"], rel=1e-8)

    def test_errors_are_small_with_moderate_noise(self, single_factor):
        _, dataset, truth = single_factor
        for row in view_metrics(decompose(dataset, truth.params), truth):
            assert row["err_x"] < 0.05
            assert row["err_c"] < 0.2
            assert row["err_pve_view"] < 0.1


class TestRunStudy:
    def test_thread_count_does_not_change_results(self):
        spec = SetupSpec.create("1.1", p1=40, n=100, seed=3)
        serial = run_study(spec, StudyConfig(reps=3, threads=1))
        parallel = run_study(spec, StudyConfig(reps=3, threads=3))
        pd.testing.assert_frame_equal(serial.views, parallel.views)
        pd.testing.assert_frame_equal(serial.replications, parallel.replications)

    def test_summary_with_true_params(self):
        spec = SetupSpec.create("1.1", p1=40, n=100, seed=3)
        summary = run_study(spec, StudyConfig(reps=3))
        record = summary.to_dict()
        assert record["reps"] == 3
        assert record["failed_reps"] == 0
        assert record["selection_accuracy"] is None
        assert set(record["views"]) == {"view1", "view2", "view3"}
        assert record["true_pve_c"] == pytest.approx(population_truth(spec).pve_view_c.tolist())
        assert summary.view_means().shape[0] == 3
        assert (summary.view_sds().values >= 0).all()

    def test_summary_with_selection(self):
        spec = SetupSpec.create("1.1", p1=40, n=150, seed=3)
        config = StudyConfig(reps=2, use_true_params=False, selection=SelectionConfig(bootstrap=100, rank_bootstrap=20))
        accuracy = run_study(spec, config).selection_accuracy()
        assert set(accuracy) == {"ranks", "L", "I0", "r_star", "delta", "sign", "all"}
        assert all(0.0 <= value <= 1.0 for value in accuracy.values())

    def test_single_replication_has_zero_spread(self):
        spec = SetupSpec.create("1.1", p1=40, n=100, seed=3)
        summary = run_study(spec, StudyConfig(reps=1))
        assert (summary.view_sds().values == 0).all()
        assert summary.to_dict()["rho1"]["sd"] == 0.0
