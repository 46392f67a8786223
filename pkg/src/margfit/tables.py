"""Joint and marginal distributions over two categorical variables.

Probabilities are stored as float64, counts as int64. Containers are frozen
dataclasses around read-only arrays, so constructed values are immutable and
safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

__all__ = [
    "PROB_TOL",
    "Axis",
    "JointDistribution",
    "MarginalDistribution",
    "CountTable",
    "SampleBatch",
    "CrossProductRatios",
    "row_marginal",
    "column_marginal",
    "empirical_joint",
    "sample",
    "cross_product_ratios",
    "build_2x2_from_marginals_cpr",
]

# Absolute tolerance for "sums to one" checks on probability inputs.
PROB_TOL = 1e-12

Axis = Literal["row", "column"]


def _frozen(values, dtype) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """An I x J table of cell probabilities."""

    cells: np.ndarray

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.float64)
        if cells.ndim != 2 or cells.size == 0:
            raise ValueError("cells must form a non-empty 2-d table")
        if not np.isfinite(cells).all() or (cells < 0).any():
            raise ValueError("cell probabilities must be finite and >= 0")
        total = float(cells.sum())
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"cell probabilities must sum to 1, got {total!r}")
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)

    @property
    def n_rows(self) -> int:
        return self.cells.shape[0]

    @property
    def n_cols(self) -> int:
        return self.cells.shape[1]

    @property
    def dims(self) -> tuple[int, int]:
        return self.cells.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, JointDistribution):
            return NotImplemented
        return np.array_equal(self.cells, other.cells)


@dataclass(frozen=True, eq=False)
class MarginalDistribution:
    """A probability vector over one axis of a joint table."""

    probs: np.ndarray
    axis: Axis

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.size == 0:
            raise ValueError("marginal must be a non-empty vector")
        if not np.isfinite(probs).all() or (probs < 0).any():
            raise ValueError("marginal entries must be finite and >= 0")
        total = float(probs.sum())
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"marginal entries must sum to 1, got {total!r}")
        if self.axis not in ("row", "column"):
            raise ValueError(f"axis must be 'row' or 'column', got {self.axis!r}")
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return self.probs.shape[0]

    def require_positive(self, context: str = "known marginal") -> None:
        """Raise if any entry is zero (the standing assumption for a known
        column marginal is strict positivity)."""
        if (self.probs == 0.0).any():
            raise ValueError(f"{context} must have strictly positive entries")

    def __eq__(self, other) -> bool:
        if not isinstance(other, MarginalDistribution):
            return NotImplemented
        return self.axis == other.axis and np.array_equal(self.probs, other.probs)


@dataclass(frozen=True, eq=False)
class CountTable:
    """An I x J table of observation counts with its grand total."""

    counts: np.ndarray
    total: int = field(init=False)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.size == 0:
            raise ValueError("counts must form a non-empty 2-d table")
        if not np.issubdtype(counts.dtype, np.integer):
            as_int = np.asarray(counts, dtype=np.int64)
            if not np.array_equal(as_int, counts):
                raise ValueError("counts must be integers")
            counts = as_int
        counts = np.array(counts, dtype=np.int64)
        if (counts < 0).any():
            raise ValueError("counts must be >= 0")
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "total", int(counts.sum()))

    @property
    def dims(self) -> tuple[int, int]:
        return self.counts.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, CountTable):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Raw paired observations (x_t, y_t) with 1-based category labels."""

    pairs: np.ndarray
    dims: tuple[int, int]

    def __post_init__(self):
        pairs = np.array(self.pairs, dtype=np.int64)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise ValueError("pairs must be an (n, 2) array of category labels")
        n_rows, n_cols = self.dims
        if n_rows < 1 or n_cols < 1:
            raise ValueError("dims must be positive")
        x, y = pairs[:, 0], pairs[:, 1]
        if pairs.size and ((x < 1).any() or (x > n_rows).any() or (y < 1).any() or (y > n_cols).any()):
            raise ValueError("pair labels out of range for the given dims")
        pairs.flags.writeable = False
        object.__setattr__(self, "pairs", pairs)

    def __len__(self) -> int:
        return self.pairs.shape[0]

    def to_count_table(self) -> CountTable:
        n_rows, n_cols = self.dims
        flat = (self.pairs[:, 0] - 1) * n_cols + (self.pairs[:, 1] - 1)
        counts = np.bincount(flat, minlength=n_rows * n_cols).reshape(n_rows, n_cols)
        return CountTable(counts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SampleBatch):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.pairs, other.pairs)


def row_marginal(p: JointDistribution) -> MarginalDistribution:
    """Sum each row of the table: the distribution of the row variable."""
    return MarginalDistribution(p.cells.sum(axis=1), axis="row")


def column_marginal(p: JointDistribution) -> MarginalDistribution:
    """Sum each column of the table: the distribution of the column variable."""
    return MarginalDistribution(p.cells.sum(axis=0), axis="column")


def empirical_joint(c: CountTable) -> JointDistribution:
    """Relative cell frequencies counts/total."""
    if c.total == 0:
        raise ValueError("no observations")
    return JointDistribution(c.counts / c.total)


def sample(p: JointDistribution, n: int, seed: int) -> CountTable:
    """Draw a multinomial count table of size n from p.

    The draw is the sequential conditional-binomial decomposition of the
    multinomial over the cells in row-major order, so equal (p, n, seed)
    always yields bit-identical counts. The bit generator is Philox, keyed
    by the 64-bit seed alone; no global RNG state is touched.
    """
    if n < 1:
        raise ValueError("sample size must be >= 1")
    if not 0 <= int(seed) < 2**64:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    counts = rng.multinomial(n, p.cells.ravel(order="C"))
    return CountTable(counts.reshape(p.dims))


@dataclass(frozen=True, eq=False)
class CrossProductRatios:
    """All cross-product ratios p[i,j]*p[r,s] / (p[r,j]*p[i,s]) with i<r, j<s.

    ``ratios[i, r, j, s]`` holds the ratio; every other position is NaN.
    Ratios whose four cells are not all positive are NaN as well and their
    indices are recorded in ``undefined`` instead of raising.
    """

    ratios: np.ndarray
    undefined: frozenset

    def __post_init__(self):
        ratios = np.asarray(self.ratios, dtype=np.float64)
        ratios.flags.writeable = False
        object.__setattr__(self, "ratios", ratios)
        object.__setattr__(self, "undefined", frozenset(self.undefined))

    @property
    def scalar(self) -> float:
        """The single ratio of a 2x2 table."""
        if self.ratios.shape != (2, 2, 2, 2):
            raise ValueError("scalar cross-product ratio is defined for 2x2 tables only")
        return float(self.ratios[0, 1, 0, 1])

    def __eq__(self, other) -> bool:
        if not isinstance(other, CrossProductRatios):
            return NotImplemented
        return (
            np.array_equal(self.ratios, other.ratios, equal_nan=True)
            and self.undefined == other.undefined
        )


def cross_product_ratios(p: JointDistribution) -> CrossProductRatios:
    """Compute every cross-product ratio of the table.

    A ratio touching a zero cell is flagged as undefined rather than raised:
    zero cells are legitimate in empirical tables.
    """
    cells = p.cells
    n_rows, n_cols = p.dims
    num = cells[:, None, :, None] * cells[None, :, None, :]
    den = cells[None, :, :, None] * cells[:, None, None, :]
    i, r = np.indices((n_rows, n_rows))
    j, s = np.indices((n_cols, n_cols))
    wanted = (i < r)[:, :, None, None] & (j < s)[None, None, :, :]
    positive = (
        (cells[:, None, :, None] > 0)
        & (cells[None, :, None, :] > 0)
        & (cells[None, :, :, None] > 0)
        & (cells[:, None, None, :] > 0)
    )
    ratios = np.full(num.shape, np.nan)
    ok = wanted & positive
    ratios[ok] = num[ok] / den[ok]
    undefined = frozenset(
        tuple(int(v) for v in index) for index in np.argwhere(wanted & ~positive)
    )
    return CrossProductRatios(ratios=ratios, undefined=undefined)


def _cpr_of(p11: float, a: float, b: float) -> float:
    return p11 * (1.0 - a - b + p11) / ((a - p11) * (b - p11))


def build_2x2_from_marginals_cpr(
    row: MarginalDistribution, col: MarginalDistribution, cpr: float
) -> JointDistribution:
    """Construct the 2x2 table with the given marginals and cross-product ratio.

    Parameters
    ----------
    row, col : MarginalDistribution
        Length-2 marginals (a, 1-a) and (b, 1-b) with 0 < a < 1, 0 < b < 1.
    cpr : float
        Target cross-product ratio, finite and > 0. cpr = 1 yields the
        product table; otherwise the top-left cell is the unique root of
        (1-cpr) p^2 + (1 - a - b + cpr(a+b)) p - cpr*a*b = 0 inside the
        Fréchet interval (max(0, a+b-1), min(a, b)).

    Returns
    -------
    JointDistribution
        Table whose marginals match the request and whose reconstructed
        cross-product ratio agrees with ``cpr`` to 1e-9 relative.
    """
    if len(row) != 2 or len(col) != 2:
        raise ValueError("both marginals must have length 2")
    a = float(row.probs[0])
    b = float(col.probs[0])
    if not (0.0 < a < 1.0 and 0.0 < b < 1.0):
        raise ValueError("marginals must be non-degenerate: entries strictly inside (0, 1)")
    if not math.isfinite(cpr) or cpr <= 0.0:
        raise ValueError(f"cpr must be finite and > 0, got {cpr!r}")

    if cpr == 1.0:
        cells = np.array([[a * b, a * (1.0 - b)], [(1.0 - a) * b, (1.0 - a) * (1.0 - b)]])
        return JointDistribution(cells)

    # Numerically stable roots of (1-cpr) p^2 + B p + C = 0.
    quad = 1.0 - cpr
    lin = 1.0 - a - b + cpr * (a + b)
    const = -cpr * a * b
    disc = lin * lin - 4.0 * quad * const
    if disc < 0.0:  # mathematically impossible; guard rounding
        disc = 0.0
    q = -(lin + math.copysign(math.sqrt(disc), lin)) / 2.0
    roots = [q / quad, const / q]

    lo = max(0.0, a + b - 1.0)
    hi = min(a, b)
    inside = [p for p in roots if lo < p < hi]
    if not inside:
        inside = [p for p in roots if lo - 1e-12 <= p <= hi + 1e-12]
    if not inside:
        raise ValueError(f"no feasible table for marginals ({a}, {b}) and cpr {cpr}")
    if len(inside) == 2:
        # Near-degenerate input placed both roots inside: keep the one whose
        # reconstructed cpr is closer to the request.
        inside.sort(key=lambda p: abs(_cpr_of(p, a, b) - cpr))
    p11 = inside[0]

    cells = np.array([[p11, a - p11], [b - p11, 1.0 - a - b + p11]])
    if (cells <= 0.0).any():
        raise ValueError(f"cpr {cpr} is too extreme for double precision at marginals ({a}, {b})")
    achieved = _cpr_of(p11, a, b)
    if abs(achieved - cpr) > 1e-9 * cpr:
        raise ValueError(
            f"constructed table misses cpr {cpr}: achieved {achieved!r} "
            f"(marginals ({a}, {b}) leave too little precision)"
        )
    return JointDistribution(cells)
