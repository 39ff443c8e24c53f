"""Two-level MDC -> DRG taxonomy and the dataset container built on it.

Identifiers are opaque strings; dense integer codes are assigned by
lexicographic order of the identifiers so that column layouts are
reproducible across runs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DuplicateParentError,
    EmptyDataError,
    LabelMismatchError,
    UnknownDrgError,
)

INTERCEPT_NAME = "intercept"


@dataclass(frozen=True)
class HierarchySpec:
    """Immutable description of the subgroup taxonomy.

    mdc_ids and drg_ids are lexicographically sorted; ``parent`` maps each
    DRG to exactly one MDC; ``counts`` holds per-DRG sample counts (zero
    counts allowed: those groups stay in every column layout so held-out
    rows can still be scored through the upper levels).
    """

    mdc_ids: tuple
    drg_ids: tuple
    parent: dict
    counts: dict

    def __post_init__(self):
        for d in self.drg_ids:
            if d not in self.parent:
                raise UnknownDrgError(f"DRG {d!r} has no parent MDC")
        children = {m: [] for m in self.mdc_ids}
        for d, m in self.parent.items():
            children[m].append(d)
        for m, kids in children.items():
            if not kids:
                raise DuplicateParentError(f"MDC {m!r} has no child DRG")

    @property
    def n_mdc(self) -> int:
        return len(self.mdc_ids)

    @property
    def n_drg(self) -> int:
        return len(self.drg_ids)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def zero_count_drgs(self) -> tuple:
        return tuple(d for d in self.drg_ids if self.counts[d] == 0)

    def mdc_of(self, drg: str) -> str:
        try:
            return self.parent[drg]
        except KeyError:
            raise UnknownDrgError(f"unknown DRG {drg!r}") from None

    def children_of(self, mdc: str) -> tuple:
        return tuple(d for d in self.drg_ids if self.parent[d] == mdc)

    def mdc_count(self, mdc: str) -> int:
        return sum(self.counts[d] for d in self.children_of(mdc))

    def drg_index(self) -> dict:
        return {d: i for i, d in enumerate(self.drg_ids)}

    def mdc_index(self) -> dict:
        return {m: i for i, m in enumerate(self.mdc_ids)}

    def drg_codes(self, labels: Sequence[str]) -> np.ndarray:
        """Dense integer codes for a label vector; raises on unknown DRGs."""
        idx = self.drg_index()
        codes = np.empty(len(labels), dtype=np.int64)
        for i, lab in enumerate(labels):
            try:
                codes[i] = idx[lab]
            except KeyError:
                raise UnknownDrgError(f"unknown DRG {lab!r}") from None
        return codes

    def mdc_codes(self, labels: Sequence[str]) -> np.ndarray:
        midx = self.mdc_index()
        return np.array([midx[self.mdc_of(lab)] for lab in labels], dtype=np.int64)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["drg", "mdc"])
            for d in self.drg_ids:
                w.writerow([d, self.parent[d]])


def build_hierarchy(pairs: Iterable, labels: Sequence[str]) -> HierarchySpec:
    """Build a HierarchySpec from (drg, mdc) pairs and observed DRG labels.

    Counts come from ``labels``; DRGs listed in ``pairs`` but never
    observed are kept with count zero. A DRG mapped to two distinct MDCs
    raises DuplicateParentError; a label absent from ``pairs`` raises
    UnknownDrgError.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyDataError("no (drg, mdc) pairs supplied")
    parent = {}
    for drg, mdc in pairs:
        drg, mdc = str(drg), str(mdc)
        if drg in parent and parent[drg] != mdc:
            raise DuplicateParentError(
                f"DRG {drg!r} listed under both {parent[drg]!r} and {mdc!r}"
            )
        parent[drg] = mdc
    drg_ids = tuple(sorted(parent))
    mdc_ids = tuple(sorted(set(parent.values())))
    counts = {d: 0 for d in drg_ids}
    for lab in labels:
        lab = str(lab)
        if lab not in counts:
            raise UnknownDrgError(f"label {lab!r} not present in hierarchy pairs")
        counts[lab] += 1
    return HierarchySpec(mdc_ids=mdc_ids, drg_ids=drg_ids, parent=parent, counts=counts)


def read_hierarchy_csv(path) -> list:
    """Read the two-column ``drg,mdc`` file; returns the pair list."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0][:2]] != ["drg", "mdc"]:
        raise EmptyDataError(f"{path}: expected header 'drg,mdc'")
    return [(r[0].strip(), r[1].strip()) for r in rows[1:] if r]


@dataclass
class HierDataset:
    """Rows of (binary outcome, covariates, DRG label).

    ``x`` includes the constant intercept column at predictor index 0.
    ``standardization`` is attached once the covariates have been centered
    and scaled (see design.standardize).
    """

    y: np.ndarray
    x: np.ndarray
    drg: np.ndarray
    names: list = field(default_factory=list)
    standardization: Optional[object] = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.float64)
        self.drg = np.asarray(self.drg, dtype=object)
        if self.x.ndim != 2:
            raise EmptyDataError("covariate matrix must be 2-d")
        if not self.names:
            self.names = [INTERCEPT_NAME] + [
                f"x{j}" for j in range(1, self.x.shape[1])
            ]
        bad = set(np.unique(self.y)) - {0.0, 1.0}
        if bad:
            raise LabelMismatchError(f"y must be 0/1, found {sorted(bad)}")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass
class ValidationReport:
    """Prescreening findings for a dataset against its hierarchy."""

    zero_variance: list
    correlated: list  # (dropped_name, kept_name, correlation)
    small_groups: list  # (drg, count)
    min_count: int

    @property
    def dropped_columns(self) -> list:
        return self.zero_variance + [d for d, _, _ in self.correlated]

    def summary(self) -> str:
        return (
            f"{len(self.zero_variance)} zero-variance, "
            f"{len(self.correlated)} correlated (>0.95) dropped, "
            f"{len(self.small_groups)} DRGs below count {self.min_count}"
        )


def validate_dataset(
    data: HierDataset,
    spec: HierarchySpec,
    corr_threshold: float = 0.95,
    min_count: int = 5,
    skip_intercept: bool = True,
) -> ValidationReport:
    """Prescreen: zero-variance columns, near-duplicate column pairs
    (|correlation| > threshold keeps the first in input order), and DRGs
    with fewer than ``min_count`` observations.

    The intercept column (index 0) is exempt by default since it is
    constant by construction.
    """
    if data.n == 0 or data.p == 0:
        raise EmptyDataError("dataset is empty")
    if len(data.drg) != data.n:
        raise LabelMismatchError(
            f"drg vector length {len(data.drg)} != n rows {data.n}"
        )
    spec.drg_codes(data.drg)  # raises UnknownDrg on stray labels

    start = 1 if skip_intercept and data.p > 0 else 0
    cols = list(range(start, data.p))
    sd = data.x.std(axis=0)
    zero_var = [data.names[j] for j in cols if sd[j] == 0.0]

    live = [j for j in cols if sd[j] > 0.0]
    correlated = []
    if len(live) >= 2:
        corr = np.corrcoef(data.x[:, live], rowvar=False)
        kept = []  # positions within `live` of surviving columns
        for a, j in enumerate(live):
            hit = None
            for b in kept:
                if abs(corr[a, b]) > corr_threshold:
                    hit = (data.names[j], data.names[live[b]], float(corr[a, b]))
                    break
            if hit is None:
                kept.append(a)
            else:
                correlated.append(hit)
    counts = spec.counts
    small = [(d, counts[d]) for d in spec.drg_ids if counts[d] < min_count]
    return ValidationReport(
        zero_variance=zero_var,
        correlated=correlated,
        small_groups=small,
        min_count=min_count,
    )
