import math

import numpy as np
import pytest

from helpers import outer_product_table
from margfit import (
    ExperimentConfig,
    JointDistribution,
    MarginalDistribution,
    WeightVector,
    adjusted_marginal_covariance,
    asymptotic_reduction,
    build_2x2_from_marginals_cpr,
    column_marginal,
    effective_sample_factor,
    marginal_covariance,
    multinomial_covariance,
    replicate_marginal_estimates,
    replicate_weighted_frequencies,
    run_case_study,
    run_experiment,
)
from margfit.io import load_destatis2014, load_gidas_table3
from margfit.tables import CountTable, empirical_joint, row_marginal

SYMMETRIC_2X2 = JointDistribution([[0.375, 0.125], [0.125, 0.375]])


def marg(values, axis="column"):
    return MarginalDistribution(values, axis=axis)


class TestAsymptoticReduction:
    def test_independent_table_is_zero(self):
        table = outer_product_table(np.random.default_rng(1), 2, 3)
        assert asymptotic_reduction(table) == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed_quarter(self):
        assert asymptotic_reduction(SYMMETRIC_2X2, 0) == pytest.approx(0.25, abs=1e-14)

    def test_row_determined_by_column_gives_one(self):
        table = JointDistribution([[0.7, 0.0], [0.0, 0.3]])
        assert asymptotic_reduction(table, 0) == pytest.approx(1.0, abs=1e-14)
        assert asymptotic_reduction(table, 1) == pytest.approx(1.0, abs=1e-14)

    def test_degenerate_row_rejected(self):
        table = JointDistribution([[0.6, 0.4], [0.0, 0.0]])
        with pytest.raises(ValueError, match="degenerate"):
            asymptotic_reduction(table, 1)

    def test_row_index_validated(self):
        with pytest.raises(ValueError, match="out of range"):
            asymptotic_reduction(SYMMETRIC_2X2, 2)


class TestExperimentConfig:
    def test_defaults(self):
        cfg = ExperimentConfig(row_marginal=(0.5, 0.5), col_marginal=(0.5, 0.5))
        assert len(cfg.log_cpr_grid) == 25
        assert cfg.log_cpr_grid[12] == 0.0
        assert cfg.n_grid == (20, 100, 1000, 10000)
        assert cfg.replications == 20000

    def test_validation(self):
        with pytest.raises(ValueError, match="inside"):
            ExperimentConfig(row_marginal=(1.0, 0.0), col_marginal=(0.5, 0.5))
        with pytest.raises(ValueError, match="sum to 1"):
            ExperimentConfig(row_marginal=(0.5, 0.6), col_marginal=(0.5, 0.5))
        with pytest.raises(ValueError, match="replications"):
            ExperimentConfig(
                row_marginal=(0.5, 0.5), col_marginal=(0.5, 0.5), replications=1
            )

    def test_dict_round_trip(self):
        cfg = ExperimentConfig(
            row_marginal=(0.9, 0.1),
            col_marginal=(0.7, 0.3),
            log_cpr_grid=(0.0, 1.5),
            n_grid=(50, 200),
            replications=100,
            seed=7,
        )
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            ExperimentConfig.from_dict(
                {"row_marginal": [0.5, 0.5], "col_marginal": [0.5, 0.5], "reps": 3}
            )


def small_config(**overrides):
    base = dict(
        row_marginal=(0.5, 0.5),
        col_marginal=(0.5, 0.5),
        log_cpr_grid=(0.0, math.log(9.0)),
        n_grid=(20, 1000),
        replications=2000,
        seed=11,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestRunExperiment:
    def test_deterministic_across_runs(self):
        cfg = small_config()
        assert run_experiment(cfg).cells == run_experiment(cfg).cells

    def test_parallel_schedule_is_bit_identical(self):
        cfg = small_config(replications=5000)
        serial = run_experiment(cfg, workers=1)
        threaded = run_experiment(cfg, workers=4)
        assert serial.cells == threaded.cells

    def test_matches_standalone_replication_helper(self):
        cfg = small_config()
        grid = run_experiment(cfg)
        table = build_2x2_from_marginals_cpr(
            marg(cfg.row_marginal, "row"), marg(cfg.col_marginal), math.exp(cfg.log_cpr_grid[1])
        )
        # Cell index 1 is (n=20, second cpr) in n-major order.
        reps = replicate_marginal_estimates(
            table, marg(cfg.col_marginal), 20, cfg.replications, cfg.seed, stream_key=(1,)
        )
        included = ~reps.excluded
        expected = 100.0 * (
            1.0
            - np.var(reps.ptilde_rows[included, 0], ddof=1)
            / np.var(reps.phat_rows[included, 0], ddof=1)
        )
        assert grid.cells[1].reduction_pct == expected

    def test_independent_cell_reduction_near_zero(self):
        grid = run_experiment(small_config(replications=20000))
        cell = grid.find(1000, 0.0)
        assert abs(cell.reduction_pct) < 2.0
        assert cell.asymptotic_pct == pytest.approx(0.0, abs=1e-10)

    def test_reduction_approaches_asymptotic_value(self):
        grid = run_experiment(small_config(replications=20000))
        cell = grid.find(1000, math.log(9.0))
        assert cell.asymptotic_pct == pytest.approx(25.0, abs=1e-9)
        assert cell.reduction_pct == pytest.approx(25.0, abs=3.0)

    def test_zero_column_events_counted_and_excluded(self):
        cfg = ExperimentConfig(
            row_marginal=(0.5, 0.5),
            col_marginal=(0.97, 0.03),
            log_cpr_grid=(0.0,),
            n_grid=(20,),
            replications=4000,
            seed=5,
        )
        cell = run_experiment(cfg).cells[0]
        # Column 2 is empty with probability 0.97^20 ~ 0.54 per replication.
        assert 0.45 * 4000 < cell.zero_column_events < 0.65 * 4000
        assert cell.error is None and math.isfinite(cell.reduction_pct)

    def test_infeasible_cells_marked_not_raised(self):
        cfg = small_config(log_cpr_grid=(0.0, 800.0))
        grid = run_experiment(cfg)
        good = grid.find(20, 0.0)
        bad = grid.find(20, 800.0)
        assert good.error is None
        assert bad.error is not None and bad.reduction_pct is None

    def test_reported_reduction_stays_in_range(self):
        grid = run_experiment(small_config(replications=4000))
        for cell in grid.cells:
            assert -100.0 <= cell.reduction_pct <= 100.0
            assert cell.zero_column_events <= 4000

    def test_bias_columns_are_small_and_reported(self):
        grid = run_experiment(small_config(replications=20000))
        cell = grid.find(1000, math.log(9.0))
        # Unadjusted estimator is exactly unbiased; 5 standard errors of the mean.
        se = math.sqrt(0.25 / 1000 / 20000)
        assert abs(cell.bias_hat) < 5 * se
        assert abs(cell.bias_tilde) < 5 * se + 1e-3


class TestReplicateMarginalEstimates:
    def test_excluded_replications_have_nan_adjusted_rows(self):
        table = JointDistribution([[0.5, 0.49], [0.0, 0.01]])
        reps = replicate_marginal_estimates(table, marg([0.99, 0.01]), 10, 500, seed=1)
        assert reps.excluded.any()
        assert np.isnan(reps.ptilde_rows[reps.excluded]).all()
        assert np.isfinite(reps.ptilde_rows[~reps.excluded]).all()

    def test_adjusted_rows_sum_to_one_when_included(self):
        table = SYMMETRIC_2X2
        reps = replicate_marginal_estimates(table, marg([0.5, 0.5]), 100, 300, seed=2)
        included = reps.ptilde_rows[~reps.excluded]
        np.testing.assert_allclose(included.sum(axis=1), 1.0, atol=1e-12)

    def test_scaled_covariance_approaches_adjusted_covariance(self):
        # Entrywise within 5 standard errors of the replication noise.
        rng = np.random.default_rng(3)
        cells = 0.2 + rng.random((3, 3))
        table = JointDistribution(cells / cells.sum())
        n, reps_count = 2000, 4000
        reps = replicate_marginal_estimates(
            table, column_marginal(table), n, reps_count, seed=77
        )
        assert not reps.excluded.any()
        target_rows = row_marginal(table).probs

        adjusted = adjusted_marginal_covariance(table).entries
        scaled = math.sqrt(n) * (reps.ptilde_rows - target_rows)
        observed = np.cov(scaled, rowvar=False, ddof=1)
        se = np.sqrt(
            (np.outer(np.diag(adjusted), np.diag(adjusted)) + adjusted**2) / reps_count
        )
        assert (np.abs(observed - adjusted) <= 5 * se + 1e-12).all()

        plain = marginal_covariance(table).entries
        scaled_hat = math.sqrt(n) * (reps.phat_rows - target_rows)
        observed_hat = np.cov(scaled_hat, rowvar=False, ddof=1)
        se_hat = np.sqrt(
            (np.outer(np.diag(plain), np.diag(plain)) + plain**2) / reps_count
        )
        assert (np.abs(observed_hat - plain) <= 5 * se_hat + 1e-12).all()


class TestReplicateWeightedFrequencies:
    def test_scaled_variance_matches_multinomial_covariance(self):
        # Var(weighted freq) / sum(w^2) recovers p_i (1 - p_i).
        n, reps_count = 1000, 4000
        ramp = np.arange(1, n + 1, dtype=float)
        weights = WeightVector(ramp / ramp.sum())
        estimates = replicate_weighted_frequencies([0.3, 0.7], weights, reps_count, seed=9)
        factor = effective_sample_factor(weights)
        target = multinomial_covariance([0.3, 0.7]).entries[0, 0]
        observed = float(np.var(estimates[:, 0], ddof=1)) / factor
        assert observed == pytest.approx(target, rel=5 * math.sqrt(2.0 / reps_count))

    def test_rows_sum_to_one(self):
        weights = WeightVector.uniform(50)
        estimates = replicate_weighted_frequencies([0.2, 0.5, 0.3], weights, 200, seed=4)
        np.testing.assert_allclose(estimates.sum(axis=1), 1.0, atol=1e-12)
        assert estimates.shape == (200, 3)

    def test_deterministic(self):
        weights = WeightVector.uniform(64)
        a = replicate_weighted_frequencies([0.4, 0.6], weights, 100, seed=12)
        b = replicate_weighted_frequencies([0.4, 0.6], weights, 100, seed=12)
        assert np.array_equal(a, b)


class TestCaseStudy:
    def test_unadjusted_column_matches_published_percentages(self):
        result = run_case_study(load_gidas_table3(), load_destatis2014())
        pct = np.round(100 * result.phat_vector, 1)
        np.testing.assert_array_equal(pct, [11.4, 32.4, 28.7, 15.2, 6.9, 3.0, 1.4, 0.9])

    def test_sign_pattern_of_relative_differences(self):
        result = run_case_study(load_gidas_table3(), load_destatis2014())
        rel = [row.relative_difference_pct for row in result.rows]
        assert all(r > 0 for r in rel[:3])
        assert all(r < 0 for r in rel[3:])

    def test_adjusted_column_sums_to_one(self):
        result = run_case_study(load_gidas_table3(), load_destatis2014())
        assert result.zero_column_mask == frozenset()
        assert result.ptilde_vector.sum() == pytest.approx(1.0, abs=1e-12)
        assert result.phat_vector.sum() == pytest.approx(1.0, abs=1e-12)

    def test_identity_when_marginal_matches_sample(self):
        counts = load_gidas_table3()
        observed_col = column_marginal(empirical_joint(counts))
        result = run_case_study(counts, observed_col)
        np.testing.assert_array_equal(result.phat_vector, result.ptilde_vector)
        assert all(row.relative_difference_pct == 0.0 for row in result.rows)

    def test_zero_column_raises_warning_mask(self):
        counts = CountTable(np.array([[3, 0], [1, 0]]))
        result = run_case_study(counts, marg([0.6, 0.4]))
        assert result.zero_column_mask == frozenset({1})
        assert result.ptilde_vector.sum() == pytest.approx(0.6, abs=1e-12)

    def test_zero_row_yields_undefined_relative_difference(self):
        counts = CountTable(np.array([[2, 2], [0, 0]]))
        result = run_case_study(counts, marg([0.5, 0.5]))
        assert result.rows[1].relative_difference_pct is None
