"""AUROC / AUPRC and per-subgroup summaries.

AUROC is the Mann-Whitney concordance (ties count one half), computed from
average ranks. AUPRC is average precision: ranks walk descending scores
with ties broken by stable input order, and precision is averaged at each
positive. Single-class subgroups are skipped, never imputed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import AllGroupsSkippedError, NoPositivesError, SingleClassError


def auroc(scores, labels) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClassError("AUROC needs both classes")
    ranks = rankdata(scores, method="average")
    pos_rank_sum = ranks[labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise NoPositivesError("AUPRC needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = np.cumsum(labels[order])
    ranks = np.arange(1, labels.size + 1)
    is_pos = labels[order] == 1
    terms = hits[is_pos] / ranks[is_pos]
    # sequential accumulation in rank order (matches walking the ranking)
    total = np.cumsum(terms)[-1] if terms.size else 0.0
    return float(total / n_pos)


@dataclass
class MetricsReport:
    level: str
    per_group: dict            # group -> {"auroc", "auprc", "n", "n_pos"}
    skipped: dict              # group -> reason
    mean_auroc: float = field(init=False)
    worst_auroc: float = field(init=False)
    mean_auprc: float = field(init=False)
    worst_auprc: float = field(init=False)

    def __post_init__(self):
        rocs = [v["auroc"] for v in self.per_group.values()]
        prcs = [v["auprc"] for v in self.per_group.values()]
        self.mean_auroc = float(np.mean(rocs))
        self.worst_auroc = float(np.min(rocs))
        self.mean_auprc = float(np.mean(prcs))
        self.worst_auprc = float(np.min(prcs))

    def to_rows(self) -> list:
        rows = []
        for g in sorted(self.per_group):
            v = self.per_group[g]
            rows.append(
                {
                    "group": g,
                    "n": v["n"],
                    "n_pos": v["n_pos"],
                    "auroc": v["auroc"],
                    "auprc": v["auprc"],
                }
            )
        return rows

    def to_csv(self, path) -> None:
        rows = self.to_rows()
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["group", "n", "n_pos", "auroc", "auprc"])
            w.writeheader()
            for r in rows:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})

    def summary_dict(self) -> dict:
        return {
            "level": self.level,
            "n_groups": len(self.per_group),
            "n_skipped": len(self.skipped),
            "skipped": {g: r for g, r in sorted(self.skipped.items())},
            "mean_auroc": self.mean_auroc,
            "worst_auroc": self.worst_auroc,
            "mean_auprc": self.mean_auprc,
            "worst_auprc": self.worst_auprc,
        }

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def subgroup_report(scores, labels, groups, level: str = "drg", spec=None) -> MetricsReport:
    """Per-group AUROC/AUPRC with mean and worst over the usable groups.

    ``groups`` are per-row labels at the requested level; with
    level="mdc" and a hierarchy given, DRG labels are mapped up to their
    MDC first.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    groups = np.asarray(groups, dtype=object)
    if level == "mdc" and spec is not None:
        groups = np.array([spec.mdc_of(g) for g in groups], dtype=object)
    per_group, skipped = {}, {}
    for g in sorted(set(groups)):
        mask = groups == g
        ls = labels[mask]
        n_pos = int(ls.sum())
        if n_pos == 0 or n_pos == ls.size:
            skipped[g] = "single-class"
            continue
        per_group[g] = {
            "auroc": auroc(scores[mask], ls),
            "auprc": auprc(scores[mask], ls),
            "n": int(ls.size),
            "n_pos": n_pos,
        }
    if not per_group:
        raise AllGroupsSkippedError("every subgroup was single-class")
    return MetricsReport(level=level, per_group=per_group, skipped=skipped)
