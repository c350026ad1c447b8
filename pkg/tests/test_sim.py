"""Data-generating processes and the replication studies."""

import numpy as np
import numpy.testing as npt
import pytest
from scipy.integrate import quad
from scipy.special import expit

from kbalance.baselines import raw_dim
from kbalance.errors import DataError
from kbalance.pipeline import RunConfig
from kbalance.sim import (
    dgp_logistic_1d,
    dgp_peacekeeping,
    dgp_z5,
    rscan_grid,
    run_study,
)


class TestPeacekeepingDgp:
    def test_deterministic(self):
        a = dgp_peacekeeping(200, 5)
        b = dgp_peacekeeping(200, 5)
        npt.assert_array_equal(a.dataset.X, b.dataset.X)
        npt.assert_array_equal(a.dataset.Y, b.dataset.Y)

    def test_minimum_n(self):
        with pytest.raises(DataError):
            dgp_peacekeeping(10, 0)

    def test_schema_and_ranges(self):
        draw = dgp_peacekeeping(2000, 1)
        ds = draw.dataset
        assert ds.column_names == ["war_duration", "fatalities", "democracy",
                                   "factionalism"]
        cols = {c: ds.X[:, j] for j, c in enumerate(ds.column_names)}
        assert cols["war_duration"].min() >= 1.0
        intensity = draw.hidden["intensity"]
        assert intensity.min() >= 100.0 and intensity.max() <= 10000.0
        npt.assert_allclose(cols["fatalities"], intensity * cols["war_duration"])
        assert "intensity" not in ds.column_names

    def test_outcome_noise_sd(self):
        draw = dgp_peacekeeping(100000, 2)
        eps = draw.dataset.Y - draw.hidden["intensity"] / 2500.0
        assert abs(eps.std() - 0.0632) < 0.005

    def test_treatment_share_matches_integral(self):
        # E[P(D=1)] = mean of expit(u/5000 - 2) over u ~ Uniform(100, 10000)
        expected = quad(lambda u: expit(u / 5000.0 - 2.0), 100, 10000)[0] / 9900.0
        draw = dgp_peacekeeping(10000, 3)
        share = draw.dataset.D.mean()
        assert abs(share - expected) < 0.05
        assert 0.22 <= share <= 0.32

    def test_true_effect_zero(self):
        draw = dgp_peacekeeping(500, 4)
        npt.assert_array_equal(draw.hidden["y0"], draw.hidden["y1"])

    def test_bias_decomposition_identity(self):
        # raw DIM = SATT + (mean Y0 treated - mean Y0 control), exactly
        draw = dgp_peacekeeping(500, 6)
        ds = draw.dataset
        y0, y1 = draw.hidden["y0"], draw.hidden["y1"]
        satt = (y1 - y0)[ds.D == 1].mean()
        bias = y0[ds.D == 1].mean() - y0[ds.D == 0].mean()
        dim = raw_dim(ds).point
        assert abs(dim - (satt + bias)) <= 1e-12


class TestOtherDgps:
    def test_logistic_1d(self):
        draw = dgp_logistic_1d(20000, 0)
        ds = draw.dataset
        assert ds.p == 1
        # oracle: treated share = integral of expit(2x-2) against the N(0,1) pdf
        p_bar = quad(
            lambda x: expit(2 * x - 2) * np.exp(-x * x / 2) / np.sqrt(2 * np.pi),
            -10, 10,
        )[0]
        assert abs(ds.n_treated / ds.n - p_bar) < 0.01
        ratio = ds.n_control / ds.n_treated
        assert abs(ratio - (1 - p_bar) / p_bar) < 0.3
        a = dgp_logistic_1d(50, 3)
        b = dgp_logistic_1d(50, 3)
        npt.assert_array_equal(a.dataset.X, b.dataset.X)

    def test_logistic_assignment_probability(self):
        # P(D=1 | X=1) = 0.5: check empirically near X = 1
        draw = dgp_logistic_1d(200000, 1)
        x = draw.dataset.X[:, 0]
        near = np.abs(x - 1.0) < 0.05
        assert abs(draw.dataset.D[near].mean() - 0.5) < 0.03

    def test_z5(self):
        draw = dgp_z5(500, 0)
        ds = draw.dataset
        assert ds.p == 5
        z = draw.hidden["z"]
        assert np.all(z >= 0)
        npt.assert_allclose(z, np.sqrt(ds.X[:, 0] ** 2 + ds.X[:, 1] ** 2))
        assert "z" not in ds.column_names
        ratio = ds.n_control / ds.n_treated
        assert 1.2 <= ratio <= 3.5


class TestStudies:
    def test_validation(self):
        with pytest.raises(DataError):
            run_study("figure12", 0, 0, RunConfig())
        with pytest.raises(DataError):
            run_study("unknown", 5, 0, RunConfig())

    def test_figure12_smoke(self):
        report = run_study("figure12", 3, 0, RunConfig())
        assert report.replications == 3
        assert set(report.summary["method"]) == {
            "raw", "matching", "matching_plus", "mean_balance", "kbal"}
        assert {"mean_bias", "sd", "mean_imb_intensity"} <= set(report.summary.columns)
        assert len(report.detail) == 15

    def test_figure12_deterministic(self):
        a = run_study("figure12", 2, 7, RunConfig())
        b = run_study("figure12", 2, 7, RunConfig())
        npt.assert_array_equal(a.summary["mean_bias"].to_numpy(),
                               b.summary["mean_bias"].to_numpy())

    def test_density_fig(self):
        report = run_study("density_fig", 1, 0, RunConfig(b=16.0))
        row = report.summary.iloc[0]
        assert row["l1_after"] <= row["l1_before"]
        table = report.detail
        assert {"x", "d", "p_treated", "p_control", "p_control_weighted"} <= set(table.columns)
        assert np.all(table["p_control_weighted"] > 0)

    def test_rscan_grid_columns(self):
        draw = dgp_z5(300, 1)
        grid = rscan_grid(draw.dataset, draw.hidden["z"], RunConfig(), r_max=10)
        assert list(grid.columns) == ["r", "l1", "hidden_imbalance"]
        assert len(grid) <= 10
        feasible = grid[np.isfinite(grid["l1"])]
        assert len(feasible) >= 1

    def test_rscan_study_smoke(self):
        report = run_study("rscan_fig", 2, 0, RunConfig())
        assert len(report.summary) == 2
        assert {"chosen_r", "hidden_imbalance_at_chosen",
                "min_hidden_imbalance"} <= set(report.summary.columns)
