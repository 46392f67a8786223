"""Monte Carlo study of the variance removed by the marginal adjustment.

The harness sweeps 2x2 tables with fixed marginals over a grid of sample
sizes and log cross-product ratios. For every grid cell it draws count
tables, computes the first-row marginal estimate with and without the
column adjustment, and reports the percentage of estimator variance the
adjustment removed, next to the analytic large-sample value.

Reproducibility scheme
----------------------
Replications run in fixed blocks of ``CHUNK_REPLICATIONS``. The generator
for block c of grid cell k is Philox keyed by
``SeedSequence(entropy=seed, spawn_key=(k, c))``; a replication's stream
therefore depends only on the master seed and its own indices, never on
scheduling. Per-replication estimates land in index-addressed arrays and
are aggregated in a fixed order, so serial and parallel runs of the same
configuration are bit-identical.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .asymptotics import adjusted_marginal_covariance, marginal_covariance
from .estimators import WeightVector, adjust_to_known_marginal, adjusted_row_marginal
from .tables import (
    CountTable,
    JointDistribution,
    MarginalDistribution,
    build_2x2_from_marginals_cpr,
    empirical_joint,
)

__all__ = [
    "CHUNK_REPLICATIONS",
    "DEFAULT_N_GRID",
    "DEFAULT_REPLICATIONS",
    "STUDY_MARGINALS",
    "default_log_cpr_grid",
    "ExperimentConfig",
    "GridCell",
    "ExperimentGrid",
    "MarginalReplicates",
    "replicate_marginal_estimates",
    "replicate_weighted_frequencies",
    "asymptotic_reduction",
    "run_experiment",
    "CaseStudyRow",
    "CaseStudyResult",
    "run_case_study",
]

# Replication block size; part of the determinism contract (changing it
# changes which stream serves which replication).
CHUNK_REPLICATIONS = 4096

DEFAULT_N_GRID = (20, 100, 1000, 10000)
DEFAULT_REPLICATIONS = 20000

# The three marginal configurations of the study: (row marginal, column marginal).
STUDY_MARGINALS = {
    "I": ((0.5, 0.5), (0.5, 0.5)),
    "II": ((0.9, 0.1), (0.7, 0.3)),
    "III": ((0.2, 0.8), (0.7, 0.3)),
}


def default_log_cpr_grid() -> tuple[float, ...]:
    """25 equispaced log cross-product ratios spanning [-5, 5]."""
    return tuple(float(x) for x in np.linspace(-5.0, 5.0, 25))


def _stream(seed: int, key: tuple[int, ...]) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=key))
    )


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid specification for :func:`run_experiment`.

    ``row_marginal``/``col_marginal`` are the fixed 2x2 marginals (a, 1-a)
    and (b, 1-b); the grid is the cross product of ``n_grid`` and
    ``log_cpr_grid``.
    """

    row_marginal: tuple[float, float]
    col_marginal: tuple[float, float]
    log_cpr_grid: tuple[float, ...] = field(default_factory=default_log_cpr_grid)
    n_grid: tuple[int, ...] = DEFAULT_N_GRID
    replications: int = DEFAULT_REPLICATIONS
    seed: int = 0

    def __post_init__(self):
        for name in ("row_marginal", "col_marginal"):
            pair = tuple(float(x) for x in getattr(self, name))
            if len(pair) != 2 or not all(0.0 < x < 1.0 for x in pair):
                raise ValueError(f"{name} must be two probabilities strictly inside (0, 1)")
            if abs(sum(pair) - 1.0) > 1e-12:
                raise ValueError(f"{name} must sum to 1")
            object.__setattr__(self, name, pair)
        log_grid = tuple(float(x) for x in self.log_cpr_grid)
        if not log_grid or not all(math.isfinite(x) for x in log_grid):
            raise ValueError("log_cpr_grid must be non-empty and finite")
        object.__setattr__(self, "log_cpr_grid", log_grid)
        n_grid = tuple(int(n) for n in self.n_grid)
        if not n_grid or any(n < 1 for n in n_grid):
            raise ValueError("n_grid must be non-empty with entries >= 1")
        object.__setattr__(self, "n_grid", n_grid)
        if int(self.replications) < 2:
            raise ValueError("replications must be >= 2")
        object.__setattr__(self, "replications", int(self.replications))
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "seed", int(self.seed))

    def with_overrides(self, seed: int | None = None, replications: int | None = None):
        updates = {}
        if seed is not None:
            updates["seed"] = seed
        if replications is not None:
            updates["replications"] = replications
        return replace(self, **updates) if updates else self

    def to_dict(self) -> dict:
        return {
            "row_marginal": list(self.row_marginal),
            "col_marginal": list(self.col_marginal),
            "log_cpr_grid": list(self.log_cpr_grid),
            "n_grid": list(self.n_grid),
            "replications": self.replications,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ValueError("experiment config must be a JSON object")
        known = {
            "row_marginal",
            "col_marginal",
            "log_cpr_grid",
            "n_grid",
            "replications",
            "seed",
        }
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for required in ("row_marginal", "col_marginal"):
            if required not in data:
                raise ValueError(f"config is missing {required!r}")
        kwargs = {k: v for k, v in data.items() if k in known}
        for key in ("row_marginal", "col_marginal", "log_cpr_grid", "n_grid"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class GridCell:
    """One (n, log cpr) grid point of an experiment.

    Numeric fields are ``None`` and ``error`` explains why whenever the cell
    could not be computed; the run itself keeps going.
    """

    n: int
    log_cpr: float
    reduction_pct: float | None
    asymptotic_pct: float | None
    bias_hat: float | None
    bias_tilde: float | None
    zero_column_events: int | None
    error: str | None = None


@dataclass(frozen=True)
class ExperimentGrid:
    """All grid cells of one experiment, n-major in configuration order."""

    cells: tuple[GridCell, ...]

    def find(self, n: int, log_cpr: float, atol: float = 1e-12) -> GridCell:
        for cell in self.cells:
            if cell.n == n and abs(cell.log_cpr - log_cpr) <= atol:
                return cell
        raise KeyError(f"no grid cell at n={n}, log_cpr={log_cpr}")


@dataclass(frozen=True, eq=False)
class MarginalReplicates:
    """Per-replication row-marginal estimates from repeated sampling.

    ``excluded`` flags replications whose count table had an empty column,
    where the adjusted estimate is undefined; their ``ptilde_rows`` are NaN.
    """

    phat_rows: np.ndarray
    ptilde_rows: np.ndarray
    excluded: np.ndarray


def _chunk_estimates(
    flat_cells: np.ndarray,
    col_probs: np.ndarray,
    dims: tuple[int, int],
    n: int,
    size: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_rows, n_cols = dims
    counts = rng.multinomial(n, flat_cells, size=size).reshape(size, n_rows, n_cols)
    col_sums = counts.sum(axis=1)
    excluded = (col_sums == 0).any(axis=1)
    phat = counts.sum(axis=2) / n
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = col_probs / col_sums
        ptilde = (counts * scale[:, None, :]).sum(axis=2)
    ptilde[excluded] = np.nan
    return phat, ptilde, excluded


def _chunk_bounds(replications: int) -> list[tuple[int, int, int]]:
    """(chunk index, start, size) triples covering all replications."""
    bounds = []
    for c, start in enumerate(range(0, replications, CHUNK_REPLICATIONS)):
        bounds.append((c, start, min(CHUNK_REPLICATIONS, replications - start)))
    return bounds


def replicate_marginal_estimates(
    p: JointDistribution,
    known_col: MarginalDistribution,
    n: int,
    replications: int,
    seed: int,
    stream_key: tuple[int, ...] = (),
) -> MarginalReplicates:
    """Draw ``replications`` count tables of size n from p and estimate the
    row marginal both ways on each.

    ``stream_key`` prefixes the per-chunk spawn keys, letting callers embed
    this routine in a larger deterministic experiment (the grid runner
    passes its cell index).
    """
    if n < 1:
        raise ValueError("sample size must be >= 1")
    if replications < 1:
        raise ValueError("replications must be >= 1")
    known_col.require_positive("known column marginal")
    if len(known_col) != p.n_cols:
        raise ValueError("known marginal length must match the number of columns")
    flat = p.cells.ravel(order="C")
    phat = np.empty((replications, p.n_rows))
    ptilde = np.empty((replications, p.n_rows))
    excluded = np.empty(replications, dtype=bool)
    for c, start, size in _chunk_bounds(replications):
        rng = _stream(seed, (*stream_key, c))
        ph, pt, ex = _chunk_estimates(flat, known_col.probs, p.dims, n, size, rng)
        phat[start : start + size] = ph
        ptilde[start : start + size] = pt
        excluded[start : start + size] = ex
    return MarginalReplicates(phat_rows=phat, ptilde_rows=ptilde, excluded=excluded)


def replicate_weighted_frequencies(
    probs: Sequence[float] | MarginalDistribution,
    weights: WeightVector,
    replications: int,
    seed: int,
) -> np.ndarray:
    """Per-replication weighted category frequencies, shape (replications, I).

    Each replication draws len(weights) i.i.d. categories from ``probs`` and
    forms sum_t w_t * 1{x_t == i}. Used to check the slower convergence rate
    of non-uniformly weighted estimates.
    """
    if isinstance(probs, MarginalDistribution):
        probs = probs.probs
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or abs(float(probs.sum()) - 1.0) > 1e-12 or (probs < 0).any():
        raise ValueError("probs must be a probability vector")
    if replications < 1:
        raise ValueError("replications must be >= 1")
    n = len(weights)
    n_categories = probs.shape[0]
    edges = np.cumsum(probs)
    edges[-1] = 1.0  # guard the last edge against rounding
    # Fixed blocking policy: at most ~4e6 category draws per block.
    block = max(1, 4_000_000 // n)
    out = np.empty((replications, n_categories))
    chunk_index = 0
    for start in range(0, replications, block):
        size = min(block, replications - start)
        rng = _stream(seed, (chunk_index,))
        draws = rng.random((size, n))
        xs = np.searchsorted(edges, draws, side="right")
        for i in range(n_categories):
            out[start : start + size, i] = (xs == i).astype(np.float64) @ weights.weights
        chunk_index += 1
    return out


def asymptotic_reduction(p: JointDistribution, row: int = 0) -> float:
    """Large-sample fraction of row-marginal variance removed by adjustment.

    (plain_rr - adjusted_rr) / plain_rr for the requested row (0-based);
    zero for outer-product tables, one when the row variable is a function
    of the column variable.
    """
    if not 0 <= row < p.n_rows:
        raise ValueError(f"row index {row} out of range")
    plain = marginal_covariance(p).entries[row, row]
    adjusted = adjusted_marginal_covariance(p).entries[row, row]
    if plain == 0.0:
        raise ValueError("row marginal is degenerate; variance is zero")
    return float((plain - adjusted) / plain)


def _aggregate_cell(
    n: int,
    log_cpr: float,
    asym_pct: float,
    target: float,
    phat: np.ndarray,
    ptilde: np.ndarray,
    excluded: np.ndarray,
) -> GridCell:
    events = int(excluded.sum())
    included = ~excluded
    if int(included.sum()) < 2:
        return GridCell(
            n=n,
            log_cpr=log_cpr,
            reduction_pct=None,
            asymptotic_pct=asym_pct,
            bias_hat=None,
            bias_tilde=None,
            zero_column_events=events,
            error="fewer than 2 replications had all columns observed",
        )
    var_hat = float(np.var(phat[included], ddof=1))
    var_tilde = float(np.var(ptilde[included], ddof=1))
    if var_hat == 0.0:
        return GridCell(
            n=n,
            log_cpr=log_cpr,
            reduction_pct=None,
            asymptotic_pct=asym_pct,
            bias_hat=None,
            bias_tilde=None,
            zero_column_events=events,
            error="unadjusted estimator variance is zero",
        )
    return GridCell(
        n=n,
        log_cpr=log_cpr,
        reduction_pct=100.0 * (1.0 - var_tilde / var_hat),
        asymptotic_pct=asym_pct,
        bias_hat=float(phat[included].mean() - target),
        bias_tilde=float(ptilde[included].mean() - target),
        zero_column_events=events,
        error=None,
    )


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> ExperimentGrid:
    """Run the full (n, log cpr) grid of ``cfg``.

    Infeasible grid points (e.g. a cpr too extreme for the marginals in
    double precision) become error cells and the run continues. Work is
    split into (cell, replication-block) tasks; any ``workers`` setting
    produces bit-identical results because every block's stream and every
    aggregation order is fixed by indices alone.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    row = MarginalDistribution(cfg.row_marginal, axis="row")
    col = MarginalDistribution(cfg.col_marginal, axis="column")
    target = cfg.row_marginal[0]
    points = [(n, lc) for n in cfg.n_grid for lc in cfg.log_cpr_grid]

    tables: list[JointDistribution | None] = []
    build_errors: list[str | None] = []
    asym_pcts: list[float | None] = []
    for n, lc in points:
        try:
            table = build_2x2_from_marginals_cpr(row, col, math.exp(lc))
            tables.append(table)
            asym_pcts.append(100.0 * asymptotic_reduction(table, 0))
            build_errors.append(None)
        except (ValueError, OverflowError) as exc:
            tables.append(None)
            asym_pcts.append(None)
            build_errors.append(str(exc))

    reps = cfg.replications
    phat_store = {k: np.empty(reps) for k, t in enumerate(tables) if t is not None}
    ptilde_store = {k: np.empty(reps) for k in phat_store}
    excluded_store = {k: np.empty(reps, dtype=bool) for k in phat_store}

    tasks = [
        (k, c, start, size)
        for k in phat_store
        for c, start, size in _chunk_bounds(reps)
    ]

    def run_task(task: tuple[int, int, int, int]) -> None:
        k, c, start, size = task
        table = tables[k]
        n = points[k][0]
        rng = _stream(cfg.seed, (k, c))
        ph, pt, ex = _chunk_estimates(
            table.cells.ravel(order="C"), col.probs, table.dims, n, size, rng
        )
        phat_store[k][start : start + size] = ph[:, 0]
        ptilde_store[k][start : start + size] = pt[:, 0]
        excluded_store[k][start : start + size] = ex

    if workers == 1:
        for task in tasks:
            run_task(task)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_task, tasks))

    cells = []
    for k, (n, lc) in enumerate(points):
        if build_errors[k] is not None:
            cells.append(
                GridCell(
                    n=n,
                    log_cpr=lc,
                    reduction_pct=None,
                    asymptotic_pct=None,
                    bias_hat=None,
                    bias_tilde=None,
                    zero_column_events=None,
                    error=build_errors[k],
                )
            )
        else:
            cells.append(
                _aggregate_cell(
                    n,
                    lc,
                    asym_pcts[k],
                    target,
                    phat_store[k],
                    ptilde_store[k],
                    excluded_store[k],
                )
            )
    return ExperimentGrid(cells=tuple(cells))


@dataclass(frozen=True)
class CaseStudyRow:
    """Marginal estimates for one row, with and without the adjustment."""

    phat: float
    ptilde: float
    relative_difference_pct: float | None


@dataclass(frozen=True)
class CaseStudyResult:
    rows: tuple[CaseStudyRow, ...]
    zero_column_mask: frozenset

    @property
    def phat_vector(self) -> np.ndarray:
        return np.array([r.phat for r in self.rows])

    @property
    def ptilde_vector(self) -> np.ndarray:
        return np.array([r.ptilde for r in self.rows])


def run_case_study(counts: CountTable, known_col: MarginalDistribution) -> CaseStudyResult:
    """Row-marginal estimates of a count table, unadjusted and adjusted to a
    known column marginal, with their relative difference in percent.

    An empty empirical column is reported through ``zero_column_mask``; the
    relative difference of a row with zero unadjusted estimate is ``None``.
    """
    phat_joint = empirical_joint(counts)
    adjusted = adjust_to_known_marginal(phat_joint, known_col)
    phat_rows = phat_joint.cells.sum(axis=1)
    ptilde_rows = adjusted_row_marginal(adjusted)
    rows = []
    for ph, pt in zip(phat_rows, ptilde_rows):
        rel = 100.0 * (float(pt) / float(ph) - 1.0) if ph > 0 else None
        rows.append(CaseStudyRow(phat=float(ph), ptilde=float(pt), relative_difference_pct=rel))
    return CaseStudyResult(rows=tuple(rows), zero_column_mask=adjusted.zero_column_mask)
