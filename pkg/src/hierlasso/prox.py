"""Proximal operators for the nested overall/MDC/DRG penalty.

For one predictor's coefficient block theta = [mu; (eta_1, deltas_1); ...]
the penalty is

    lam * ( |theta|_2  +  sum_M ( a1 * |theta^M|_2  +  a2 * sum_{d in M} |delta_d| ) )

where theta^M stacks an MDC's eta with its child-DRG deltas. The groups
form a tree (delta singletons inside MDC sub-blocks inside the full
block), so the proximal operator of the sum is the composition of the
individual group operators applied leaves-to-root:

    1. soft-threshold every DRG-level coordinate at t*lam*a2,
    2. shrink each MDC sub-block toward zero at t*lam*a1,
    3. shrink the whole block at t*lam.

Because an eta can only reach zero when stage 2 wipes its whole sub-block,
and mu only when stage 3 wipes the block, the zero pattern of any output
is hierarchical: mu == 0 forces everything to zero, eta^M == 0 forces that
MDC's deltas to zero. The L1 stage deliberately skips eta (and mu);
thresholding eta individually would break exactly this guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def soft_threshold(z: np.ndarray, b) -> np.ndarray:
    """Coordinate-wise sign(z) * (|z| - b)_+ with per-coordinate or scalar
    nonnegative thresholds. An infinite threshold maps to exactly 0."""
    z = np.asarray(z, dtype=np.float64)
    return np.sign(z) * np.maximum(np.abs(z) - b, 0.0)


def group_shrink(z: np.ndarray, a: float) -> np.ndarray:
    """(1 - a/|z|_2)_+ * z; returns z unchanged when a == 0 and the zero
    vector when |z|_2 <= a."""
    z = np.asarray(z, dtype=np.float64)
    if a == 0.0:
        return z.copy()
    nz = np.linalg.norm(z)
    if nz <= a:
        return np.zeros_like(z)
    return (1.0 - a / nz) * z


@dataclass(frozen=True)
class BlockLayout:
    """Positions inside one predictor block: where mu sits, the (start,
    stop) span of each MDC sub-block, and which coordinates are DRG-level.
    """

    mu_index: int
    mdc_ranges: tuple  # ((start, stop), ...) covering eta + child deltas
    size: int

    def __post_init__(self):
        covered = {self.mu_index}
        for s, e in self.mdc_ranges:
            span = set(range(s, e))
            if span & covered:
                raise ValueError("overlapping MDC ranges in block layout")
            covered |= span
        if covered != set(range(self.size)):
            raise ValueError("block layout does not cover all positions")

    @property
    def delta_mask(self) -> np.ndarray:
        m = np.zeros(self.size, dtype=bool)
        for s, e in self.mdc_ranges:
            m[s + 1 : e] = True  # first slot of each range is eta
        return m

    @property
    def deviation_mask(self) -> np.ndarray:
        m = np.ones(self.size, dtype=bool)
        m[self.mu_index] = False
        return m

    @classmethod
    def from_design(cls, design) -> "BlockLayout":
        return cls(
            mu_index=0,
            mdc_ranges=tuple(design.mdc_ranges),
            size=design.layout.block_size,
        )


def hier_prox(z, t: float, lam: float, alpha1: float, alpha2: float,
              layout: BlockLayout, penalize_mu: bool = True) -> np.ndarray:
    """argmin_x 0.5*|x - z|^2 + t*lam*(|x|_2 + sum_M(a1*|x^M|_2 + a2*|delta^M|_1)).

    With penalize_mu=False the mu coordinate is left out of every stage
    (used for the intercept predictor, whose overall coefficient is
    unpenalized); the root shrink then acts on the deviation coordinates
    only.
    """
    out = np.array(z, dtype=np.float64, copy=True)
    tl = t * lam
    if tl == 0.0:
        return out
    dm = layout.delta_mask
    out[dm] = soft_threshold(out[dm], tl * alpha2)
    for s, e in layout.mdc_ranges:
        out[s:e] = group_shrink(out[s:e], tl * alpha1)
    if penalize_mu:
        out = group_shrink(out, tl)
    else:
        dev = layout.deviation_mask
        out[dev] = group_shrink(out[dev], tl)
    return out


def hier_penalty_value(theta_block, lam, alpha1, alpha2, layout: BlockLayout,
                       penalize_mu: bool = True) -> float:
    """Penalty evaluated on one block; the quantity hier_prox minimizes
    together with the quadratic term (used for objective traces)."""
    th = np.asarray(theta_block, dtype=np.float64)
    val = 0.0
    for s, e in layout.mdc_ranges:
        val += alpha1 * np.linalg.norm(th[s:e])
        val += alpha2 * np.abs(th[s + 1 : e]).sum()
    if penalize_mu:
        val += np.linalg.norm(th)
    else:
        val += np.linalg.norm(th[layout.deviation_mask])
    return lam * val
