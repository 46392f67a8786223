"""Command-line front-end.

Exit codes: 0 success, 1 usage error, 2 parse error, 3 numeric/contract
error. Every subcommand is a pure function of its inputs, flags and seed:
repeated invocations emit identical bytes.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .asymptotics import (
    adjusted_marginal_covariance,
    chi2_reduction_bound,
    marginal_covariance,
)
from .estimators import adjust_to_known_marginal, adjusted_row_marginal, ipf_fit
from .io import (
    ParseError,
    case_study_to_json_dict,
    grid_to_json_dict,
    load_destatis2014,
    load_gidas_table3,
    load_study_config,
    read_count_table,
    read_experiment_config,
    read_joint_table,
    read_marginal,
    render_case_study_csv,
    render_grid_csv,
    render_sections,
    write_text,
)
from .simulation import asymptotic_reduction, run_case_study, run_experiment
from .tables import column_marginal, empirical_joint, row_marginal

__all__ = ["main", "build_parser"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 instead of argparse's default 2
        raise UsageError(message)


def _add_output_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--out", metavar="PATH", help="write output here instead of stdout")


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _load_table(args) -> "JointDistribution":
    """A probability table from --table, or normalized counts from --counts."""
    if getattr(args, "table", None) and getattr(args, "counts", None):
        raise UsageError("pass exactly one of --table and --counts")
    if getattr(args, "table", None):
        return read_joint_table(args.table)
    if getattr(args, "counts", None):
        return empirical_joint(read_count_table(args.counts))
    raise UsageError("one of --table or --counts is required")


def _cmd_estimate(args) -> str:
    counts = read_count_table(args.counts)
    joint = empirical_joint(counts)
    rows = row_marginal(joint)
    cols = column_marginal(joint)
    if args.format == "json":
        return _json_text(
            {
                "joint": joint.cells.tolist(),
                "row_marginal": rows.probs.tolist(),
                "column_marginal": cols.probs.tolist(),
            }
        )
    return render_sections(
        {"joint": joint.cells, "row_marginal": rows.probs, "column_marginal": cols.probs}
    )


def _cmd_adjust(args) -> str:
    phat = _load_table(args)
    marginal = read_marginal(args.marginal, axis="column").marginal
    adjusted = adjust_to_known_marginal(phat, marginal)
    row_estimates = adjusted_row_marginal(adjusted)
    mask = np.array(sorted(adjusted.zero_column_mask), dtype=np.int64)
    if args.format == "json":
        return _json_text(
            {
                "adjusted_cells": adjusted.cells.tolist(),
                "known_column_marginal": marginal.probs.tolist(),
                "adjusted_row_marginal": row_estimates.tolist(),
                "zero_columns": mask.tolist(),
            }
        )
    return render_sections(
        {
            "adjusted_cells": adjusted.cells,
            "known_column_marginal": marginal.probs,
            "adjusted_row_marginal": row_estimates,
            "zero_columns": mask,
        }
    )


def _cmd_asymptotics(args) -> str:
    table = _load_table(args)
    plain = marginal_covariance(table).entries
    adjusted = adjusted_marginal_covariance(table).entries
    gap = plain - adjusted
    chi2 = chi2_reduction_bound(table)
    reductions = np.array(
        [100.0 * asymptotic_reduction(table, i) for i in range(table.n_rows)]
    )
    if args.format == "json":
        return _json_text(
            {
                "plain_covariance": plain.tolist(),
                "adjusted_covariance": adjusted.tolist(),
                "variance_gap": gap.tolist(),
                "chi2_bound": chi2,
                "asymptotic_reduction_pct": reductions.tolist(),
            }
        )
    return render_sections(
        {
            "plain_covariance": plain,
            "adjusted_covariance": adjusted,
            "variance_gap": gap,
            "chi2_bound": np.array([[chi2]]),
            "asymptotic_reduction_pct": reductions,
        }
    )


def _load_config(path_str: str):
    path = Path(path_str)
    if not path.exists() and path.name in ("caseI.json", "caseII.json", "caseIII.json"):
        return load_study_config(path.name[4:-5])
    return read_experiment_config(path)


def _cmd_simulate(args) -> str:
    cfg = _load_config(args.config).with_overrides(
        seed=args.seed, replications=args.replications
    )
    grid = run_experiment(cfg)
    if args.format == "json":
        return _json_text(grid_to_json_dict(grid, config=cfg))
    return render_grid_csv(grid)


def _cmd_case_study(args) -> str:
    counts = read_count_table(args.counts) if args.counts else load_gidas_table3()
    marginal = (
        read_marginal(args.marginal, axis="column").marginal
        if args.marginal
        else load_destatis2014()
    )
    result = run_case_study(counts, marginal)
    if args.format == "json":
        return _json_text(case_study_to_json_dict(result))
    return render_case_study_csv(result)


def _cmd_ipf(args) -> str:
    init = _load_table(args)
    row_target = read_marginal(args.row_marginal, axis="row").marginal
    col_target = read_marginal(args.col_marginal, axis="column").marginal
    result = ipf_fit(init, row_target, col_target, tol=args.tol, max_iter=args.max_iter)
    if args.format == "json":
        return _json_text(
            {
                "fitted": result.table.cells.tolist(),
                "iterations": result.iterations,
                "converged": result.converged,
            }
        )
    return render_sections(
        {
            "fitted": result.table.cells,
            "iterations": np.array([[result.iterations]], dtype=np.int64),
            "converged": np.array([[int(result.converged)]], dtype=np.int64),
        }
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="margfit",
        description=(
            "Estimate discrete distributions from contingency-table counts, adjust "
            "them to a known column marginal, and quantify the variance gain."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="empirical joint table and marginals from counts")
    p.add_argument("--counts", required=True, metavar="PATH")
    _add_output_flags(p)
    p.set_defaults(handler=_cmd_estimate)

    p = sub.add_parser("adjust", help="reweight a table to a known column marginal")
    p.add_argument("--counts", metavar="PATH")
    p.add_argument("--table", metavar="PATH")
    p.add_argument("--marginal", required=True, metavar="PATH")
    _add_output_flags(p)
    p.set_defaults(handler=_cmd_adjust)

    p = sub.add_parser(
        "asymptotics",
        help="limit covariances of both estimators, their gap, and reduction bounds",
    )
    p.add_argument("--table", metavar="PATH")
    p.add_argument("--counts", metavar="PATH")
    _add_output_flags(p)
    p.set_defaults(handler=_cmd_asymptotics)

    p = sub.add_parser("simulate", help="run a variance-reduction grid experiment")
    p.add_argument("--config", required=True, metavar="PATH")
    p.add_argument("--seed", type=int, metavar="U64", help="override the config seed")
    p.add_argument(
        "--replications", type=int, metavar="INT", help="override config replications"
    )
    _add_output_flags(p)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser(
        "case-study",
        help="marginal estimates before/after adjustment (bundled accident data by default)",
    )
    p.add_argument("--counts", metavar="PATH", help="count table (default: bundled GIDAS table)")
    p.add_argument(
        "--marginal", metavar="PATH", help="known column marginal (default: bundled 2014 data)"
    )
    _add_output_flags(p)
    p.set_defaults(handler=_cmd_case_study)

    p = sub.add_parser("ipf", help="iterative proportional fitting to two target marginals")
    p.add_argument("--table", metavar="PATH")
    p.add_argument("--counts", metavar="PATH")
    p.add_argument("--row-marginal", required=True, metavar="PATH")
    p.add_argument("--col-marginal", required=True, metavar="PATH")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=1000)
    _add_output_flags(p)
    p.set_defaults(handler=_cmd_ipf)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        text = args.handler(args)
        if args.out:
            write_text(args.out, text)
        else:
            sys.stdout.write(text)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"parse error: cannot read {exc.filename}", file=sys.stderr)
        return 2
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
