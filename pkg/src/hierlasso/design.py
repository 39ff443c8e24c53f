"""Block-sparse expanded design matrix and sample-size penalty weights.

Each predictor ``j`` of the standardized covariate matrix X contributes a
contiguous block of ``1 + n_mdc + n_drg`` columns to the expanded matrix:
one overall column (a copy of X[:, j]), one column per MDC (X[:, j] masked
to that MDC's rows) and one column per DRG (masked to that DRG's rows).
Within a block the layout is

    [overall | mdc_1, drg_{1,1}, ..., drg_{1,k1} | mdc_2, ... ]

so that each MDC's column together with its child-DRG columns form one
contiguous sub-block, which is what the groupwise solver shrinks as a
unit. Fitting a linear model on the expanded matrix is identical to
fitting per-DRG coefficient vectors mu + eta^{mdc(d)} + delta_d; the
expansion is the columnwise Kronecker (Khatri-Rao) product of X with the
(ones | MDC indicator | DRG indicator) membership matrix, reordered
predictor-major.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import EmptyDataError
from .hierarchy import HierarchySpec

LEVEL_OVERALL = "overall"
LEVEL_MDC = "mdc"
LEVEL_DRG = "drg"


@dataclass
class Standardization:
    """Per-column (mean, scale) pairs; constant columns are flagged and
    passed through unchanged by apply()."""

    means: np.ndarray
    scales: np.ndarray
    constant: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        out = np.array(x, dtype=np.float64, copy=True)
        live = ~self.constant
        out[:, live] = (out[:, live] - self.means[live]) / self.scales[live]
        return out

    def to_jsonable(self) -> dict:
        return {
            "means": self.means.tolist(),
            "scales": self.scales.tolist(),
            "constant": [bool(c) for c in self.constant],
        }

    @classmethod
    def from_jsonable(cls, d: dict) -> "Standardization":
        return cls(
            means=np.asarray(d["means"], dtype=np.float64),
            scales=np.asarray(d["scales"], dtype=np.float64),
            constant=np.asarray(d["constant"], dtype=bool),
        )


def standardize(x: np.ndarray):
    """Center and scale each column to mean 0 and (population) sd 1.

    Constant columns -- including the intercept column -- are returned
    unchanged with their mean recorded and scale 1, so that applying the
    recorded statistics to new data reproduces the transform exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise EmptyDataError("cannot standardize an empty matrix")
    means = x.mean(axis=0)
    sds = x.std(axis=0)  # divide-by-n convention
    constant = sds <= 1e-12 * (1.0 + np.abs(means))
    scales = np.where(constant, 1.0, sds)
    stats = Standardization(means=means, scales=scales, constant=constant)
    return stats.apply(x), stats


@dataclass(frozen=True)
class HierLayout:
    """Column bookkeeping for one predictor block and the full flat vector."""

    spec: HierarchySpec
    n_predictors: int

    @property
    def block_size(self) -> int:
        return 1 + self.spec.n_mdc + self.spec.n_drg

    @property
    def n_columns(self) -> int:
        return self.n_predictors * self.block_size

    def within_block(self):
        """(mdc_slot, drg_slot, mdc_ranges): slot maps group id -> position
        inside a block; mdc_ranges are the contiguous (start, stop) spans of
        each MDC sub-block (its eta position plus its child-DRG positions)."""
        mdc_slot, drg_slot, mdc_ranges = {}, {}, []
        pos = 1
        for m in self.spec.mdc_ids:
            start = pos
            mdc_slot[m] = pos
            pos += 1
            for d in self.spec.children_of(m):
                drg_slot[d] = pos
                pos += 1
            mdc_ranges.append((start, pos))
        return mdc_slot, drg_slot, mdc_ranges

    def describe(self, flat_index: int):
        """Map a flat column index to (predictor, level, group id)."""
        b = self.block_size
        j, pos = divmod(int(flat_index), b)
        if pos == 0:
            return j, LEVEL_OVERALL, None
        mdc_slot, drg_slot, _ = self.within_block()
        for m, s in mdc_slot.items():
            if s == pos:
                return j, LEVEL_MDC, m
        for d, s in drg_slot.items():
            if s == pos:
                return j, LEVEL_DRG, d
        raise IndexError(flat_index)

    def block_range(self, j: int):
        b = self.block_size
        return j * b, (j + 1) * b

    def mdc_subblocks(self, j: int):
        """Flat (start, stop) spans of predictor j's per-MDC sub-blocks."""
        base = j * self.block_size
        _, _, ranges = self.within_block()
        return [(base + s, base + e) for s, e in ranges]


class HierDesign:
    """Expanded design with both a CSC matrix and the structured pieces the
    solver actually iterates over.

    Immutable after construction; safe to share across concurrent fits.
    """

    def __init__(self, x, drg_labels, spec: HierarchySpec, intercept_index: Optional[int] = 0,
                 names: Optional[Sequence[str]] = None):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.size == 0:
            raise EmptyDataError("design needs a nonempty 2-d matrix")
        self.x = x
        self.spec = spec
        self.intercept_index = intercept_index
        self.names = list(names) if names is not None else [f"x{j}" for j in range(x.shape[1])]
        self.layout = HierLayout(spec=spec, n_predictors=x.shape[1])

        self.drg_code = spec.drg_codes(drg_labels)
        self.mdc_code = spec.mdc_codes(drg_labels)
        mdc_slot, drg_slot, mdc_ranges = self.layout.within_block()
        self.mdc_slot = mdc_slot
        self.drg_slot = drg_slot
        self.mdc_ranges = mdc_ranges
        # per-group slot position, indexed by dense group code
        self.mdc_pos = np.array([mdc_slot[m] for m in spec.mdc_ids], dtype=np.int64)
        self.drg_pos = np.array([drg_slot[d] for d in spec.drg_ids], dtype=np.int64)
        # per-row within-block column of the row's MDC / DRG
        self.row_mdc_col = self.mdc_pos[self.mdc_code]
        self.row_drg_col = self.drg_pos[self.drg_code]

        n = x.shape[0]
        ones = np.ones(n)
        self.h_mdc = sp.csr_matrix(
            (ones, (np.arange(n), self.mdc_code)), shape=(n, spec.n_mdc)
        )
        self.h_drg = sp.csr_matrix(
            (ones, (np.arange(n), self.drg_code)), shape=(n, spec.n_drg)
        )
        self.xh = self._build_xh()

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def n_predictors(self) -> int:
        return self.x.shape[1]

    def _build_xh(self) -> sp.csc_matrix:
        # one stored entry per (nonzero of X) x (overall, mdc, drg)
        rows, cols = np.nonzero(self.x)
        vals = self.x[rows, cols]
        base = cols * self.layout.block_size
        i = np.concatenate([rows, rows, rows])
        j = np.concatenate(
            [base, base + self.row_mdc_col[rows], base + self.row_drg_col[rows]]
        )
        v = np.concatenate([vals, vals, vals])
        return sp.csc_matrix(
            (v, (i, j)), shape=(self.n, self.layout.n_columns)
        )

    def linear_predictor(self, theta: np.ndarray) -> np.ndarray:
        """Row-wise x_i . (mu + eta^{mdc(i)} + delta_{drg(i)}) for a (p, B)
        coefficient array; equals xh @ theta.ravel() up to float roundoff."""
        contrib = (
            theta[:, 0][None, :]
            + theta[np.arange(self.n_predictors)[None, :], self.row_mdc_col[:, None]]
            + theta[np.arange(self.n_predictors)[None, :], self.row_drg_col[:, None]]
        )
        return np.einsum("ij,ij->i", self.x, contrib)

    def block_columns_dense(self, j: int) -> np.ndarray:
        """Materialize predictor j's block as a dense (n, B) matrix."""
        s, e = self.layout.block_range(j)
        return np.asarray(self.xh[:, s:e].todense())


def build_hier_design(x, drg_labels, spec: HierarchySpec, intercept_index=0, names=None) -> HierDesign:
    """Construct the expanded design; raises UnknownDrg on stray labels."""
    return HierDesign(x, drg_labels, spec, intercept_index=intercept_index, names=names)


@dataclass(frozen=True)
class PenaltyWeights:
    """Fourth-root sample-size ratios: smaller groups get larger weights.

    Groups with zero observations get +inf so their coefficients can never
    be selected under the weighted lasso penalty.
    """

    k_mdc: dict
    k_drg: dict

    def block_weights(self, design: HierDesign) -> np.ndarray:
        """Per-position weights of one predictor block: 1 at the overall
        position, K^M at MDC positions, K_d at DRG positions."""
        b = design.layout.block_size
        w = np.ones(b)
        for m, pos in design.mdc_slot.items():
            w[pos] = self.k_mdc[m]
        for d, pos in design.drg_slot.items():
            w[pos] = self.k_drg[d]
        return w


def penalty_weights(spec: HierarchySpec) -> PenaltyWeights:
    total = spec.total
    if total <= 0:
        raise EmptyDataError("hierarchy has zero total count")
    k_mdc = {}
    for m in spec.mdc_ids:
        nm = spec.mdc_count(m)
        k_mdc[m] = (total / nm) ** 0.25 if nm > 0 else float("inf")
    k_drg = {}
    for d in spec.drg_ids:
        nd = spec.counts[d]
        k_drg[d] = (total / nd) ** 0.25 if nd > 0 else float("inf")
    return PenaltyWeights(k_mdc=k_mdc, k_drg=k_drg)
