import json
import math

import numpy as np
import pytest

from margfit import (
    CountTable,
    ExperimentConfig,
    JointDistribution,
    run_case_study,
    run_experiment,
)
from margfit.io import (
    ParseError,
    bundled_data_text,
    case_study_from_json_dict,
    case_study_to_json_dict,
    grid_from_json_dict,
    grid_to_json_dict,
    load_destatis2014,
    load_gidas_table3,
    load_study_config,
    parse_case_study_csv_text,
    parse_count_table_text,
    parse_grid_csv_text,
    parse_joint_table_text,
    parse_marginal_text,
    parse_sections_text,
    read_count_table,
    read_experiment_config,
    render_case_study_csv,
    render_count_table,
    render_grid_csv,
    render_joint_table,
    render_marginal,
    render_sections,
    write_text,
)
from margfit.tables import MarginalDistribution


class TestCountTableFormat:
    def test_minimal_file(self):
        table = parse_count_table_text("#rows=1 cols=1\n5\n")
        assert np.array_equal(table.counts, [[5]])

    def test_comments_and_blank_lines_ignored(self):
        text = "#rows=2 cols=2\n# a comment\n\n1,2\n3,4\n"
        table = parse_count_table_text(text)
        assert np.array_equal(table.counts, [[1, 2], [3, 4]])

    def test_negative_count_reports_line(self):
        with pytest.raises(ParseError, match=r"f\.csv:3: negative count"):
            parse_count_table_text("#rows=2 cols=1\n4\n-2\n", "f.csv")

    def test_non_integer_reports_line(self):
        with pytest.raises(ParseError, match=":2: not an integer"):
            parse_count_table_text("#rows=1 cols=1\n2.5\n")

    def test_malformed_header(self):
        with pytest.raises(ParseError, match=":1: expected header"):
            parse_count_table_text("rows=1 cols=1\n5\n")

    def test_wrong_column_count(self):
        with pytest.raises(ParseError, match="expected 3 columns"):
            parse_count_table_text("#rows=1 cols=3\n1,2\n")

    def test_missing_rows(self):
        with pytest.raises(ParseError, match="expected 2 data rows, got 1"):
            parse_count_table_text("#rows=2 cols=1\n5\n")

    def test_extra_rows(self):
        with pytest.raises(ParseError, match="extra data"):
            parse_count_table_text("#rows=1 cols=1\n5\n6\n")

    def test_round_trip_is_bit_exact(self):
        table = CountTable(np.array([[0, 12, 5], [7, 0, 99]]))
        assert parse_count_table_text(render_count_table(table)) == table

    def test_read_from_disk(self, tmp_path):
        path = tmp_path / "t.csv"
        write_text(path, "#rows=1 cols=2\n3,4\n")
        assert read_count_table(path).total == 7


class TestMarginalFormat:
    def test_integer_counts_normalized(self):
        parsed = parse_marginal_text("106181,11898,423\n")
        assert parsed.normalized_from_counts
        np.testing.assert_allclose(
            parsed.marginal.probs,
            np.array([106181, 11898, 423]) / 118502,
            atol=1e-15,
        )

    def test_probabilities_taken_verbatim(self):
        parsed = parse_marginal_text("0.5,0.5\n")
        assert not parsed.normalized_from_counts
        np.testing.assert_array_equal(parsed.marginal.probs, [0.5, 0.5])

    def test_bad_sum_rejected(self):
        with pytest.raises(ParseError, match="sum to 1"):
            parse_marginal_text("0.6,0.5\n")

    def test_non_number_rejected(self):
        with pytest.raises(ParseError, match="not a number"):
            parse_marginal_text("0.5,half\n")

    def test_two_data_lines_rejected(self):
        with pytest.raises(ParseError, match="single marginal data line"):
            parse_marginal_text("0.5,0.5\n0.5,0.5\n")

    def test_empty_rejected(self):
        with pytest.raises(ParseError, match="no marginal data"):
            parse_marginal_text("# only a comment\n")

    def test_axis_parameter(self):
        assert parse_marginal_text("0.5,0.5\n", axis="row").marginal.axis == "row"

    def test_render_round_trip(self):
        marginal = MarginalDistribution([0.25, 0.5, 0.25], axis="column")
        parsed = parse_marginal_text(render_marginal(marginal))
        assert parsed.marginal == marginal


class TestJointTableFormat:
    def test_round_trip_bit_exact(self):
        rng = np.random.default_rng(13)
        cells = rng.random((3, 4))
        table = JointDistribution(cells / cells.sum())
        assert parse_joint_table_text(render_joint_table(table)) == table

    def test_bad_sum_is_parse_error(self):
        with pytest.raises(ParseError, match="sum to 1"):
            parse_joint_table_text("#rows=1 cols=2\n0.5,0.4\n")


class TestSectionedFormat:
    def test_round_trip(self):
        sections = {
            "matrix": np.array([[0.25, -0.25], [-0.25, 0.25]]),
            "vector": np.array([1.5, 2.5]),
            "scalar": np.array([[0.125]]),
            "ids": np.array([[3, 1]], dtype=np.int64),
            "empty": np.zeros((1, 0), dtype=np.int64),
        }
        parsed = parse_sections_text(render_sections(sections))
        assert set(parsed) == set(sections)
        np.testing.assert_array_equal(parsed["matrix"], sections["matrix"])
        np.testing.assert_array_equal(parsed["vector"], sections["vector"].reshape(1, -1))
        np.testing.assert_array_equal(parsed["ids"], sections["ids"])
        assert parsed["ids"].dtype == np.int64
        assert parsed["empty"].shape == (1, 0)

    def test_truncated_section_rejected(self):
        with pytest.raises(ParseError, match="truncated"):
            parse_sections_text("#section=m rows=2 cols=1 kind=float\n0.5\n")

    def test_garbage_rejected(self):
        with pytest.raises(ParseError, match="section header"):
            parse_sections_text("not a header\n")


def tiny_grid():
    cfg = ExperimentConfig(
        row_marginal=(0.5, 0.5),
        col_marginal=(0.5, 0.5),
        log_cpr_grid=(0.0, math.log(9.0), 800.0),
        n_grid=(50,),
        replications=300,
        seed=21,
    )
    return cfg, run_experiment(cfg)


class TestGridFormats:
    def test_csv_round_trip_including_error_cells(self):
        _, grid = tiny_grid()
        assert any(c.error for c in grid.cells)
        parsed = parse_grid_csv_text(render_grid_csv(grid))
        assert parsed.cells == grid.cells

    def test_json_round_trip(self):
        cfg, grid = tiny_grid()
        payload = json.loads(json.dumps(grid_to_json_dict(grid, config=cfg)))
        assert grid_from_json_dict(payload).cells == grid.cells
        assert ExperimentConfig.from_dict(payload["config"]) == cfg

    def test_header_is_stable(self):
        _, grid = tiny_grid()
        header = render_grid_csv(grid).splitlines()[0]
        assert header == "n,log_cpr,reduction_pct,asymptotic_pct,bias_hat,bias_tilde,zero_columns,error"

    def test_unexpected_header_rejected(self):
        with pytest.raises(ParseError, match="header"):
            parse_grid_csv_text("a,b,c\n")


class TestCaseStudyFormats:
    def result(self):
        return run_case_study(load_gidas_table3(), load_destatis2014())

    def test_csv_round_trip(self):
        result = self.result()
        assert parse_case_study_csv_text(render_case_study_csv(result)) == result

    def test_json_round_trip(self):
        result = self.result()
        payload = json.loads(json.dumps(case_study_to_json_dict(result)))
        assert case_study_from_json_dict(payload) == result

    def test_display_columns_use_four_significant_digits(self):
        lines = render_case_study_csv(self.result()).splitlines()
        first = lines[2].split(",")
        assert first[1] == "11.43"
        assert first[4].startswith("0.114320835")  # full-precision raw column


class TestBundledData:
    def test_gidas_counts(self):
        table = load_gidas_table3()
        assert table.dims == (8, 3)
        assert table.total == 3254
        assert np.array_equal(table.counts.sum(axis=0), [2538, 676, 40])

    def test_destatis_marginal(self):
        marginal = load_destatis2014()
        np.testing.assert_array_equal(
            np.round(marginal.probs, 3), [0.896, 0.100, 0.004]
        )
        marginal.require_positive()

    def test_study_configs(self):
        for case, (rows, cols) in {
            "I": ((0.5, 0.5), (0.5, 0.5)),
            "II": ((0.9, 0.1), (0.7, 0.3)),
            "III": ((0.2, 0.8), (0.7, 0.3)),
        }.items():
            cfg = load_study_config(case)
            assert cfg.row_marginal == rows
            assert cfg.col_marginal == cols
            assert cfg.replications == 20000
            assert len(cfg.log_cpr_grid) == 25

    def test_unknown_case_rejected(self):
        with pytest.raises(ValueError, match="unknown study case"):
            load_study_config("IV")

    def test_bundled_text_has_lf_endings(self):
        assert "\r" not in bundled_data_text("gidas_table3.csv")


class TestExperimentConfigFile:
    def test_read_valid(self, tmp_path):
        path = tmp_path / "cfg.json"
        write_text(path, json.dumps({"row_marginal": [0.5, 0.5], "col_marginal": [0.7, 0.3]}))
        cfg = read_experiment_config(path)
        assert cfg.col_marginal == (0.7, 0.3)
        assert cfg.replications == 20000

    def test_invalid_json_reports_location(self, tmp_path):
        path = tmp_path / "cfg.json"
        write_text(path, "{not json")
        with pytest.raises(ParseError):
            read_experiment_config(path)

    def test_missing_keys_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        write_text(path, json.dumps({"row_marginal": [0.5, 0.5]}))
        with pytest.raises(ParseError, match="missing"):
            read_experiment_config(path)
