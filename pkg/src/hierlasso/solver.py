"""Regularization-path solvers for the nested-effects logistic model.

Two penalties share one path engine:

* overlapping group lasso (``fit_path_oglasso``): groupwise
  majorization-minimization steps, one prox update per predictor block per
  sweep, with sequential strong-rule screening between path points and an
  exact KKT audit before any solution is stored;
* sample-size-weighted lasso (``fit_path_lasso``): the same engine with a
  coordinatewise soft-threshold prox and per-coefficient weights.

The strong rule is a heuristic (it assumes the screening score moves at
most as fast as lambda), so every path point ends with a sweep of the
discarded set: a predictor is only left out of the model after one prox
step from zero, taken at its exact gradient, returns zero. The intercept's
overall coefficient is never penalized and stays active throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .design import HierDesign, PenaltyWeights
from .errors import DegenerateResponseError, DimensionMismatchError
from .hierarchy import HierarchySpec
from .objective import LogisticState, all_step_sizes
from .prox import BlockLayout, hier_penalty_value, hier_prox, soft_threshold


@dataclass
class SolverConfig:
    max_sweeps: int = 10_000        # per path point
    coef_tol: float = 1e-7          # max coefficient change per sweep
    obj_rel_tol: float = 1e-10      # relative objective change per sweep
    refresh_every: int = 50         # full linear-predictor recompute cadence
    kkt_tol: float = 1e-6           # active-block prox displacement
    keep_trace: bool = True


class CoefficientTree:
    """Per-predictor (mu, eta per MDC, delta per DRG) coefficients, stored
    only for predictors with any nonzero entry. Flat views match the
    expanded design's column layout exactly."""

    def __init__(self, spec: HierarchySpec, names, blocks: dict, block_size: int,
                 mdc_slot: dict, drg_slot: dict, n_predictors: int):
        self.spec = spec
        self.names = list(names)
        self.blocks = {int(j): np.asarray(b, dtype=np.float64) for j, b in blocks.items()}
        self.block_size = block_size
        self.mdc_slot = dict(mdc_slot)
        self.drg_slot = dict(drg_slot)
        self.n_predictors = n_predictors

    @classmethod
    def from_dense(cls, theta: np.ndarray, design: HierDesign) -> "CoefficientTree":
        blocks = {
            j: theta[j].copy() for j in range(theta.shape[0]) if np.any(theta[j])
        }
        return cls(
            spec=design.spec,
            names=design.names,
            blocks=blocks,
            block_size=design.layout.block_size,
            mdc_slot=design.mdc_slot,
            drg_slot=design.drg_slot,
            n_predictors=design.n_predictors,
        )

    def to_dense(self) -> np.ndarray:
        theta = np.zeros((self.n_predictors, self.block_size))
        for j, b in self.blocks.items():
            theta[j] = b
        return theta

    def to_flat(self) -> np.ndarray:
        return self.to_dense().ravel()

    @classmethod
    def from_flat(cls, flat: np.ndarray, design: HierDesign) -> "CoefficientTree":
        theta = np.asarray(flat, dtype=np.float64).reshape(
            design.n_predictors, design.layout.block_size
        )
        return cls.from_dense(theta, design)

    def _block(self, j: int) -> np.ndarray:
        return self.blocks.get(j, np.zeros(self.block_size))

    def mu(self, j: int) -> float:
        return float(self._block(j)[0])

    def eta(self, j: int, mdc: str) -> float:
        return float(self._block(j)[self.mdc_slot[mdc]])

    def delta(self, j: int, drg: str) -> float:
        return float(self._block(j)[self.drg_slot[drg]])

    def beta_for_drg(self, drg: str) -> np.ndarray:
        """mu + eta^{mdc(drg)} + delta_drg across predictors."""
        mdc = self.spec.mdc_of(drg)
        beta = np.zeros(self.n_predictors)
        for j, b in self.blocks.items():
            beta[j] = b[0] + b[self.mdc_slot[mdc]] + b[self.drg_slot[drg]]
        return beta

    def beta_for_mdc(self, mdc: str) -> np.ndarray:
        beta = np.zeros(self.n_predictors)
        for j, b in self.blocks.items():
            beta[j] = b[0] + b[self.mdc_slot[mdc]]
        return beta

    def mu_vector(self) -> np.ndarray:
        beta = np.zeros(self.n_predictors)
        for j, b in self.blocks.items():
            beta[j] = b[0]
        return beta

    def level_nonzero_counts(self, tol: float = 0.0) -> dict:
        counts = {"overall": 0, "mdc": 0, "drg": 0}
        mpos = sorted(self.mdc_slot.values())
        dpos = sorted(self.drg_slot.values())
        for b in self.blocks.values():
            counts["overall"] += int(abs(b[0]) > tol)
            counts["mdc"] += int(np.sum(np.abs(b[mpos]) > tol))
            counts["drg"] += int(np.sum(np.abs(b[dpos]) > tol))
        return counts

    def is_hierarchical(self, tol: float = 1e-12, skip_mu: Optional[int] = None) -> bool:
        """mu == 0 forces the whole block to zero; eta == 0 forces its
        child deltas to zero. ``skip_mu`` exempts one predictor's mu (the
        unpenalized intercept)."""
        ranges = _mdc_ranges(self.spec, self.mdc_slot, self.drg_slot)
        for j, b in self.blocks.items():
            if j != skip_mu and abs(b[0]) <= tol and np.any(np.abs(b) > tol):
                return False
            for s, e in ranges:
                if abs(b[s]) <= tol and np.any(np.abs(b[s + 1 : e]) > tol):
                    return False
        return True


def _mdc_ranges(spec, mdc_slot, drg_slot):
    ranges = []
    for m in spec.mdc_ids:
        s = mdc_slot[m]
        kids = spec.children_of(m)
        ranges.append((s, s + 1 + len(kids)))
    return ranges


@dataclass
class PathPoint:
    lam: float
    tree: CoefficientTree
    converged: bool
    n_sweeps: int
    objective: float
    nll: float
    n_active: int
    kkt_repairs: int
    n_discarded: int
    discard_violations: int
    obj_trace: list = field(default_factory=list)


@dataclass
class FitPath:
    lambdas: np.ndarray
    penalty: str
    alpha1: Optional[float]
    alpha2: Optional[float]
    points: list

    def __post_init__(self):
        lams = np.asarray(self.lambdas, dtype=np.float64)
        if lams.size > 1 and not np.all(np.diff(lams) < 0):
            raise ValueError("lambda sequence must be strictly decreasing")

    @property
    def solutions(self):
        return [pt.tree for pt in self.points]

    @property
    def converged_all(self) -> bool:
        return all(pt.converged for pt in self.points)

    @property
    def total_discard_violations(self) -> int:
        return sum(pt.discard_violations for pt in self.points)

    def solution_at(self, lam: float) -> CoefficientTree:
        idx = int(np.argmin(np.abs(np.asarray(self.lambdas) - lam)))
        return self.points[idx].tree


# ---------------------------------------------------------------------------
# penalty strategies
# ---------------------------------------------------------------------------

class _OGLassoPenalty:
    name = "oglasso"

    def __init__(self, design: HierDesign, alpha1: float, alpha2: float):
        self.alpha1 = float(alpha1)
        self.alpha2 = float(alpha2)
        self.layout = BlockLayout.from_design(design)
        self.intercept = design.intercept_index
        self._delta_mask = self.layout.delta_mask
        self._ranges = self.layout.mdc_ranges

    def prox_block(self, j, v, t, lam):
        return hier_prox(
            v, t, lam, self.alpha1, self.alpha2, self.layout,
            penalize_mu=(j != self.intercept),
        )

    def value(self, blocks_iter, lam):
        total = 0.0
        for j, b in blocks_iter:
            total += hier_penalty_value(
                b, lam, self.alpha1, self.alpha2, self.layout,
                penalize_mu=(j != self.intercept),
            )
        return total

    def screen_norms(self, grads: np.ndarray, theta: np.ndarray, lam: float) -> np.ndarray:
        """||S(grad_j, lam*(a1*theta_tilde + a2*1_delta))||_2 per predictor;
        zero sub-blocks contribute zero thresholds (conservative)."""
        tilde = np.zeros_like(theta)
        for s, e in self._ranges:
            norms = np.linalg.norm(theta[:, s:e], axis=1)
            nz = norms > 0
            tilde[nz, s:e] = np.abs(theta[nz, s:e]) / norms[nz, None]
        b = lam * (self.alpha1 * tilde + self.alpha2 * self._delta_mask[None, :])
        c = np.sign(grads) * np.maximum(np.abs(grads) - b, 0.0)
        return np.linalg.norm(c, axis=1)

    def zero_step_nonzero(self, j, g, lam) -> bool:
        # positively homogeneous in t, so t=1 decides activation exactly
        out = self.prox_block(j, -g, 1.0, lam)
        return bool(np.any(out))

    def active_residual(self, j, theta_j, g, t, lam) -> float:
        out = self.prox_block(j, theta_j - t * g, t, lam)
        return float(np.max(np.abs(out - theta_j)))


class _WeightedLassoPenalty:
    name = "lasso"
    alpha1 = None
    alpha2 = None

    def __init__(self, design: HierDesign, weights: PenaltyWeights):
        self.w = weights.block_weights(design)
        self.intercept = design.intercept_index
        self.w_icpt = self.w.copy()
        if self.intercept is not None:
            self.w_icpt[0] = 0.0

    def _wj(self, j):
        return self.w_icpt if j == self.intercept else self.w

    def prox_block(self, j, v, t, lam):
        thr = t * lam * self._wj(j)
        if t * lam == 0.0:
            thr = np.zeros_like(v)
        return soft_threshold(v, thr)

    def value(self, blocks_iter, lam):
        total = 0.0
        for j, b in blocks_iter:
            # inf*0 guard: zero coefficients contribute nothing even at
            # infinite weight (zero-count groups)
            contrib = np.where(b == 0.0, 0.0, self._wj(j) * np.abs(b))
            total += contrib.sum()
        return lam * total

    def screen_norms(self, grads, theta, lam) -> np.ndarray:
        with np.errstate(divide="ignore"):
            ratio = np.abs(grads) / self.w[None, :]
        ratio[:, ~np.isfinite(self.w)] = 0.0
        ratio[~np.isfinite(ratio)] = 0.0
        return ratio.max(axis=1)

    def zero_step_nonzero(self, j, g, lam) -> bool:
        w = self._wj(j)
        finite = np.isfinite(w) & (w > 0)
        return bool(np.any(np.abs(g[finite]) > lam * w[finite]))

    def active_residual(self, j, theta_j, g, t, lam) -> float:
        out = self.prox_block(j, theta_j - t * g, t, lam)
        return float(np.max(np.abs(out - theta_j)))


# ---------------------------------------------------------------------------
# lambda path
# ---------------------------------------------------------------------------

def _null_state(design: HierDesign, y) -> LogisticState:
    state = LogisticState(design, y)
    j0 = design.intercept_index
    if j0 is not None:
        ybar = float(np.mean(y))
        col = design.x[:, j0]
        if 0.0 < ybar < 1.0 and np.all(col == 1.0):
            theta = state.theta
            theta[j0, 0] = math.log(ybar / (1.0 - ybar))
            state.set_theta(theta)
    return state


def _all_zero_at(penalty, grads, lam, p, intercept) -> bool:
    for j in range(p):
        if j == intercept:
            # only the deviations of the intercept block are penalized
            g = grads[j].copy()
            g[0] = 0.0
            if penalty.zero_step_nonzero(j, g, lam):
                return False
        elif penalty.zero_step_nonzero(j, grads[j], lam):
            return False
    return True


def _lambda_max(design, y, penalty, bisect_tol=1e-6) -> float:
    state = _null_state(design, y)
    grads = state.grad_all()
    p = design.n_predictors
    intercept = design.intercept_index
    hi = 0.0
    for j in range(p):
        g = grads[j]
        if j == intercept:
            g = g.copy()
            g[0] = 0.0
        hi = max(hi, float(np.linalg.norm(g)))
    if hi == 0.0:
        raise DegenerateResponseError("no signal: all screening gradients are zero")
    # ||grad_j||_2 always suffices to keep a block at zero, so hi is a
    # valid upper bracket for both penalties (weights are >= 1)
    for _ in range(8):
        if _all_zero_at(penalty, grads, hi, p, intercept):
            break
        hi *= 2.0
    lo = 0.0
    while hi - lo > bisect_tol * hi:
        mid = 0.5 * (hi + lo)
        if _all_zero_at(penalty, grads, mid, p, intercept):
            hi = mid
        else:
            lo = mid
    return hi


def lambda_path(design: HierDesign, y, *, penalty: str = "oglasso",
                alpha1: float = 1.0, alpha2: float = 1.0,
                weights: Optional[PenaltyWeights] = None,
                n_points: int = 100, ratio: float = 0.01,
                bisect_tol: float = 1e-6) -> np.ndarray:
    """Decreasing lambda sequence: lambda_max from bisection on the
    all-zero prox fixed point, then log-spaced down to ratio*lambda_max."""
    if n_points < 2:
        raise ValueError("need at least two path points")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    classes = set(np.unique(np.asarray(y, dtype=np.float64)))
    if classes != {0.0, 1.0}:
        raise DegenerateResponseError(f"response classes {sorted(classes)}")
    strat = _make_strategy(design, penalty, alpha1, alpha2, weights)
    lam_max = _lambda_max(design, y, strat, bisect_tol)
    return np.geomspace(lam_max, ratio * lam_max, n_points)


def _make_strategy(design, penalty, alpha1, alpha2, weights):
    if penalty == "oglasso":
        return _OGLassoPenalty(design, alpha1, alpha2)
    if penalty == "lasso":
        if weights is None:
            raise ValueError("lasso penalty needs PenaltyWeights")
        return _WeightedLassoPenalty(design, weights)
    raise ValueError(f"unknown penalty {penalty!r}")


# ---------------------------------------------------------------------------
# path engine
# ---------------------------------------------------------------------------

class _PathFitter:
    def __init__(self, design: HierDesign, y, penalty, config: SolverConfig):
        y = np.asarray(y, dtype=np.float64)
        if y.shape[0] != design.n:
            raise DimensionMismatchError("y length does not match design rows")
        self.design = design
        self.y = y
        self.penalty = penalty
        self.cfg = config
        self.state = _null_state(design, y)
        self.t = all_step_sizes(design)
        self.intercept = design.intercept_index
        self.updatable = [
            j for j in range(design.n_predictors) if np.isfinite(self.t[j])
        ]

    def _objective(self, lam) -> float:
        theta = self.state.theta
        nz = ((j, theta[j]) for j in range(theta.shape[0]) if np.any(theta[j]))
        return self.state.nll() + self.penalty.value(nz, lam)

    def _mm_sweeps(self, active, lam, budget, trace):
        """Cycle prox updates over the active set until blockwise
        convergence or budget exhaustion; returns (sweeps, converged)."""
        cfg = self.cfg
        order = [j for j in sorted(active) if np.isfinite(self.t[j])]
        prev_obj = trace[-1]
        sweeps = 0
        while sweeps < budget:
            sweeps += 1
            max_delta = 0.0
            for j in order:
                g = self.state.grad_block(j)
                v = self.state.theta[j] - self.t[j] * g
                newb = self.penalty.prox_block(j, v, self.t[j], lam)
                d = float(np.max(np.abs(newb - self.state.theta[j])))
                if d > 0.0:
                    self.state.update_block(j, newb)
                    max_delta = max(max_delta, d)
            if sweeps % cfg.refresh_every == 0:
                self.state.refresh()
            obj = self._objective(lam)
            trace.append(obj)
            rel = abs(prev_obj - obj) / max(abs(prev_obj), 1.0)
            prev_obj = obj
            if max_delta < cfg.coef_tol and rel < cfg.obj_rel_tol:
                return sweeps, True
        return sweeps, False

    def fit(self, lambdas) -> FitPath:
        lambdas = np.asarray(lambdas, dtype=np.float64)
        cfg = self.cfg
        p = self.design.n_predictors
        always = set() if self.intercept is None else {self.intercept}
        strong = set()
        active = set(always)
        points = []
        prev_lam = float(lambdas[0])
        for lam in lambdas:
            lam = float(lam)
            scores = self.penalty.screen_norms(
                self.state.grad_all(), self.state.theta, prev_lam
            )
            bound = 2.0 * lam - prev_lam
            candidates = set(self.updatable) - always
            strong |= {j for j in candidates if j not in strong and scores[j] > bound}
            discarded = candidates - strong
            n_disc = len(discarded)

            trace = [self._objective(lam)]
            sweeps_total = 0
            repairs = 0
            converged = True
            audit_flagged = set()
            while True:
                budget = cfg.max_sweeps - sweeps_total
                if budget <= 0:
                    converged = False
                    break
                used, ok = self._mm_sweeps(active, lam, budget, trace)
                sweeps_total += used
                if not ok:
                    converged = False
                    break
                grads = self.state.grad_all()
                scores = self.penalty.screen_norms(grads, self.state.theta, lam)
                new = {j for j in strong - active if scores[j] > lam}
                if new:
                    active |= new
                    continue
                new = {j for j in candidates - strong - active if scores[j] > lam}
                if new:
                    active |= new
                    continue
                # exact audit: prox fixed-point check on every zero block,
                # displacement residual on every active block
                viol = {
                    j
                    for j in candidates - active
                    if self.penalty.zero_step_nonzero(j, grads[j], lam)
                }
                if viol:
                    audit_flagged |= viol
                    repairs += len(viol)
                    active |= viol
                    continue
                worst = 0.0
                for j in active:
                    if not np.isfinite(self.t[j]):
                        continue
                    worst = max(
                        worst,
                        self.penalty.active_residual(
                            j, self.state.theta[j], grads[j], self.t[j], lam
                        ),
                    )
                if worst > cfg.kkt_tol:
                    continue
                break

            self.state.refresh()
            nonzero = {j for j in active if np.any(self.state.theta[j])}
            disc_viol = {
                j for j in discarded if j in audit_flagged or np.any(self.state.theta[j])
            }
            active = nonzero | always
            strong |= active
            tree = CoefficientTree.from_dense(self.state.theta, self.design)
            points.append(
                PathPoint(
                    lam=lam,
                    tree=tree,
                    converged=converged,
                    n_sweeps=sweeps_total,
                    objective=trace[-1],
                    nll=self.state.nll(),
                    n_active=len(nonzero),
                    kkt_repairs=repairs,
                    n_discarded=n_disc,
                    discard_violations=len(disc_viol),
                    obj_trace=trace if cfg.keep_trace else [],
                )
            )
            prev_lam = lam
        return FitPath(
            lambdas=lambdas,
            penalty=self.penalty.name,
            alpha1=getattr(self.penalty, "alpha1", None),
            alpha2=getattr(self.penalty, "alpha2", None),
            points=points,
        )


def fit_path_oglasso(design: HierDesign, y, lambdas, alpha1: float = 1.0,
                     alpha2: float = 1.0, config: Optional[SolverConfig] = None) -> FitPath:
    """Warm-started path fit under the overlapping group penalty."""
    cfg = config or SolverConfig()
    penalty = _OGLassoPenalty(design, alpha1, alpha2)
    return _PathFitter(design, y, penalty, cfg).fit(lambdas)


def fit_path_lasso(design: HierDesign, y, weights: PenaltyWeights, lambdas,
                   config: Optional[SolverConfig] = None) -> FitPath:
    """Warm-started path fit under the sample-size-weighted L1 penalty."""
    cfg = config or SolverConfig()
    penalty = _WeightedLassoPenalty(design, weights)
    return _PathFitter(design, y, penalty, cfg).fit(lambdas)


# ---------------------------------------------------------------------------
# standalone screening / audit ops
# ---------------------------------------------------------------------------

def screen_strong(design: HierDesign, theta: np.ndarray, y, lam_new: float,
                  lam_prev: float, alpha1: float, alpha2: float) -> np.ndarray:
    """Predictors admitted by the sequential strong rule between two path
    points: ||S(grad_j, lam_prev*(a1*theta_tilde + a2*1_delta))||_2 >
    2*lam_new - lam_prev, evaluated at the lam_prev solution."""
    penalty = _OGLassoPenalty(design, alpha1, alpha2)
    state = LogisticState(design, y, theta)
    scores = penalty.screen_norms(state.grad_all(), state.theta, lam_prev)
    admit = scores > 2.0 * lam_new - lam_prev
    if design.intercept_index is not None:
        admit[design.intercept_index] = True
    return np.flatnonzero(admit)


def kkt_check(design: HierDesign, y, theta: np.ndarray, lam: float, *,
              penalty: str = "oglasso", alpha1: float = 1.0, alpha2: float = 1.0,
              weights: Optional[PenaltyWeights] = None,
              tol: float = 1e-6) -> list:
    """Indices violating stationarity at (theta, lam): zero blocks whose
    prox step from zero moves, and active blocks whose prox displacement
    exceeds ``tol``."""
    strat = _make_strategy(design, penalty, alpha1, alpha2, weights)
    state = LogisticState(design, y, theta)
    grads = state.grad_all()
    t = all_step_sizes(design)
    out = []
    for j in range(design.n_predictors):
        if not np.isfinite(t[j]):
            continue
        block = state.theta[j]
        if not np.any(block):
            if j == design.intercept_index:
                continue
            if strat.zero_step_nonzero(j, grads[j], lam):
                out.append(j)
        else:
            if strat.active_residual(j, block, grads[j], t[j], lam) > tol:
                out.append(j)
    return out
