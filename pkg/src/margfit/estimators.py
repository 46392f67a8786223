"""Point estimators: weighted/cloned frequencies, marginal adjustment, IPF.

The central operation is :func:`adjust_to_known_marginal`, which rescales an
empirical joint table column by column so that its column marginal matches a
marginal known exactly from an external source. The same column step is the
first half-iteration of :func:`ipf_fit`, bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tables import PROB_TOL, JointDistribution, MarginalDistribution

__all__ = [
    "WeightVector",
    "CloneCounts",
    "AdjustedTable",
    "IpfResult",
    "weighted_frequencies",
    "cloned_frequencies",
    "adjust_to_known_marginal",
    "adjusted_row_marginal",
    "ipf_column_step",
    "ipf_fit",
]


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Nonnegative observation weights summing to one."""

    weights: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        if weights.ndim != 1 or weights.size == 0:
            raise ValueError("weights must be a non-empty vector")
        if not np.isfinite(weights).all() or (weights < 0).any():
            raise ValueError("weights must be finite and >= 0")
        total = float(weights.sum())
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"weights must sum to 1, got {total!r}")
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def uniform(cls, n: int) -> "WeightVector":
        return cls(np.full(n, 1.0 / n))

    def __eq__(self, other) -> bool:
        if not isinstance(other, WeightVector):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)


@dataclass(frozen=True, eq=False)
class CloneCounts:
    """Per-observation clone multiplicities (>= 1 each)."""

    counts: np.ndarray
    total: int = field(init=False)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if not np.issubdtype(np.asarray(counts).dtype, np.integer):
            as_int = np.asarray(counts, dtype=np.int64)
            if not np.array_equal(as_int, counts):
                raise ValueError("clone counts must be integers")
            counts = as_int
        counts = np.array(counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size == 0:
            raise ValueError("clone counts must be a non-empty vector")
        if (counts < 1).any():
            raise ValueError("clone counts must be >= 1")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "total", int(counts.sum()))

    def __len__(self) -> int:
        return self.counts.shape[0]

    def to_weights(self) -> WeightVector:
        """Cloning observation t exactly counts[t] times is weighting it by
        counts[t]/total."""
        return WeightVector(self.counts / self.total)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CloneCounts):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)


def _check_categories(xs, n_categories: int | None) -> tuple[np.ndarray, int]:
    xs = np.asarray(xs, dtype=np.int64)
    if xs.ndim != 1 or xs.size == 0:
        raise ValueError("observations must be a non-empty vector of category labels")
    if (xs < 1).any():
        raise ValueError("category labels are 1-based")
    top = int(xs.max())
    if n_categories is None:
        n_categories = top
    elif top > n_categories:
        raise ValueError(f"label {top} exceeds n_categories={n_categories}")
    return xs, n_categories


def weighted_frequencies(
    xs: Sequence[int], weights: WeightVector, n_categories: int | None = None
) -> np.ndarray:
    """Weighted category frequencies sum_t weights[t] * 1{xs[t] == i}.

    With uniform weights this is exactly the vector of relative frequencies.
    """
    xs, n_categories = _check_categories(xs, n_categories)
    if xs.shape[0] != len(weights):
        raise ValueError(
            f"got {xs.shape[0]} observations but {len(weights)} weights"
        )
    return np.bincount(xs - 1, weights=weights.weights, minlength=n_categories)


def cloned_frequencies(
    xs: Sequence[int], clones: CloneCounts, n_categories: int | None = None
) -> np.ndarray:
    """Frequencies of the artificially enlarged sample where observation t is
    repeated clones[t] times; identical to weighting by clones[t]/total."""
    xs = np.asarray(xs, dtype=np.int64)
    if xs.shape[0] != len(clones):
        raise ValueError(
            f"got {xs.shape[0]} observations but {len(clones)} clone counts"
        )
    return weighted_frequencies(xs, clones.to_weights(), n_categories)


@dataclass(frozen=True, eq=False)
class AdjustedTable:
    """A joint table reweighted column-wise to a known column marginal.

    Columns that were empty in the source table cannot be rescaled; they are
    left at zero and recorded in ``zero_column_mask`` (0-based indices), so
    the cells sum to 1 minus the known mass of the masked columns.
    """

    cells: np.ndarray
    known_col_marginal: MarginalDistribution
    zero_column_mask: frozenset

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.float64)
        if cells.ndim != 2 or cells.size == 0:
            raise ValueError("cells must form a non-empty 2-d table")
        if not np.isfinite(cells).all() or (cells < 0).any():
            raise ValueError("cells must be finite and >= 0")
        if len(self.known_col_marginal) != cells.shape[1]:
            raise ValueError("known marginal length must match the number of columns")
        mask = frozenset(int(j) for j in self.zero_column_mask)
        if any(j < 0 or j >= cells.shape[1] for j in mask):
            raise ValueError("zero_column_mask indices out of range")
        col_sums = cells.sum(axis=0)
        target = self.known_col_marginal.probs
        for j in range(cells.shape[1]):
            if j in mask:
                if col_sums[j] != 0.0:
                    raise ValueError(f"masked column {j} must be all zero")
            elif abs(col_sums[j] - target[j]) > PROB_TOL:
                raise ValueError(
                    f"column {j} sums to {col_sums[j]!r}, expected {target[j]!r}"
                )
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "zero_column_mask", mask)

    @property
    def dims(self) -> tuple[int, int]:
        return self.cells.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, AdjustedTable):
            return NotImplemented
        return (
            np.array_equal(self.cells, other.cells)
            and self.known_col_marginal == other.known_col_marginal
            and self.zero_column_mask == other.zero_column_mask
        )


def _scale_columns_to(cells: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Multiply each column so its sum hits the target; empty columns stay zero."""
    col_sums = cells.sum(axis=0)
    scale = np.divide(
        target, col_sums, out=np.zeros_like(col_sums), where=col_sums > 0
    )
    return cells * scale


def ipf_column_step(table: JointDistribution, col_target: MarginalDistribution) -> np.ndarray:
    """One IPF column half-step: the raw rescaled cells, no masking metadata.

    This is the literal first half-iteration of :func:`ipf_fit` and the whole
    of :func:`adjust_to_known_marginal`.
    """
    if len(col_target) != table.n_cols:
        raise ValueError("target length must match the number of columns")
    return _scale_columns_to(table.cells, col_target.probs)


def adjust_to_known_marginal(
    phat: JointDistribution, col: MarginalDistribution
) -> AdjustedTable:
    """Rescale each column of ``phat`` to match the known column marginal.

    Cell (i, j) becomes phat[i, j] * col[j] / colsum_j(phat). The known
    marginal must be strictly positive (its whole point is that the true
    column probabilities are nonzero); empirical columns that happen to be
    empty are masked rather than invented.
    """
    if len(col) != phat.n_cols:
        raise ValueError(
            f"known marginal has length {len(col)} but the table has {phat.n_cols} columns"
        )
    col.require_positive("known column marginal")
    cells = ipf_column_step(phat, col)
    empty = np.flatnonzero(phat.cells.sum(axis=0) == 0.0)
    return AdjustedTable(
        cells=cells, known_col_marginal=col, zero_column_mask=frozenset(int(j) for j in empty)
    )


def adjusted_row_marginal(t: AdjustedTable) -> np.ndarray:
    """Row sums of the adjusted table.

    Sums to 1 exactly when no column was masked, and to 1 minus the known
    mass of the masked columns otherwise.
    """
    return t.cells.sum(axis=1)


@dataclass(frozen=True)
class IpfResult:
    table: JointDistribution
    iterations: int
    converged: bool


def ipf_fit(
    init: JointDistribution,
    row_target: MarginalDistribution,
    col_target: MarginalDistribution,
    tol: float = 1e-10,
    max_iter: int = 1000,
) -> IpfResult:
    """Iterative proportional fitting of ``init`` to both target marginals.

    Each iteration rescales columns to ``col_target`` and then rows to
    ``row_target``; the column step runs first so a single half-iteration
    with only the column target reproduces :func:`adjust_to_known_marginal`
    exactly. Iterates until the largest absolute deviation of either
    marginal from its target drops below ``tol`` or ``max_iter`` full
    iterations have run. Zero cells stay zero and cross-product ratios of
    positive cells are preserved at every step.
    """
    if len(row_target) != init.n_rows or len(col_target) != init.n_cols:
        raise ValueError("target marginal lengths must match the table dims")
    row_target.require_positive("row target")
    col_target.require_positive("column target")
    if tol <= 0:
        raise ValueError("tol must be > 0")
    if max_iter < 0:
        raise ValueError("max_iter must be >= 0")

    cells = init.cells
    if (cells.sum(axis=1) == 0.0).any() or (cells.sum(axis=0) == 0.0).any():
        raise ValueError(
            "structurally infeasible: a row/column with positive target has no initial mass"
        )

    rows = row_target.probs
    cols = col_target.probs

    def deviation(c: np.ndarray) -> float:
        return max(
            float(np.abs(c.sum(axis=1) - rows).max()),
            float(np.abs(c.sum(axis=0) - cols).max()),
        )

    for iteration in range(max_iter + 1):
        if deviation(cells) < tol:
            return IpfResult(JointDistribution(cells), iteration, True)
        if iteration == max_iter:
            break
        cells = _scale_columns_to(cells, cols)
        cells = cells * (rows / cells.sum(axis=1))[:, None]
    return IpfResult(JointDistribution(cells), max_iter, False)
