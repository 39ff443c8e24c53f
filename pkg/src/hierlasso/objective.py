"""Logistic negative log-likelihood, per-predictor-block gradients, and
majorization step sizes.

The loss is the plain sum form

    nll = sum_i [ log(1 + exp(eta_i)) - y_i * eta_i ],

evaluated through logaddexp so it stays finite and accurate for large
|eta|. Each predictor's block gradient only needs grouped sums of the
residual weighted by that predictor's column, so nothing here touches the
expanded matrix directly.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .design import HierDesign
from .errors import DimensionMismatchError, StaleCacheError

# global curvature bound of the logistic loss: p(1-p) <= 1/4
CURVATURE_BOUND = 0.25


def _check_theta(theta: np.ndarray, design: HierDesign) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    want = (design.n_predictors, design.layout.block_size)
    if theta.shape != want:
        raise DimensionMismatchError(f"theta shape {theta.shape}, expected {want}")
    return theta


def nll(theta: np.ndarray, design: HierDesign, y: np.ndarray) -> float:
    """Exact negative log-likelihood at a (p, B) coefficient array."""
    theta = _check_theta(theta, design)
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != design.n:
        raise DimensionMismatchError(f"y length {y.shape[0]} != n {design.n}")
    eta = design.linear_predictor(theta)
    return float(np.logaddexp(0.0, eta).sum() - y @ eta)


def nll_from_eta(eta: np.ndarray, y: np.ndarray) -> float:
    return float(np.logaddexp(0.0, eta).sum() - y @ eta)


def _assemble_block(design: HierDesign, total, by_mdc, by_drg) -> np.ndarray:
    g = np.empty(design.layout.block_size)
    g[0] = total
    g[design.mdc_pos] = by_mdc
    g[design.drg_pos] = by_drg
    return g


def grad_block(theta: np.ndarray, design: HierDesign, y: np.ndarray, j: int) -> np.ndarray:
    """Gradient of the loss restricted to predictor j's block:
    -X^(j)T (y - prob)."""
    theta = _check_theta(theta, design)
    eta = design.linear_predictor(theta)
    resid = np.asarray(y, dtype=np.float64) - expit(eta)
    return _grad_block_from_resid(design, resid, j)


def _grad_block_from_resid(design: HierDesign, resid: np.ndarray, j: int) -> np.ndarray:
    w = design.x[:, j] * resid
    by_drg = np.bincount(design.drg_code, weights=w, minlength=design.spec.n_drg)
    by_mdc = np.bincount(design.mdc_code, weights=w, minlength=design.spec.n_mdc)
    return _assemble_block(design, -w.sum(), -by_mdc, -by_drg)


def grad_all(theta: np.ndarray, design: HierDesign, y: np.ndarray) -> np.ndarray:
    """(p, B) array of all block gradients at once."""
    theta = _check_theta(theta, design)
    eta = design.linear_predictor(theta)
    resid = np.asarray(y, dtype=np.float64) - expit(eta)
    return _grad_all_from_resid(design, resid)


def _grad_all_from_resid(design: HierDesign, resid: np.ndarray) -> np.ndarray:
    w = design.x * resid[:, None]  # (n, p)
    g = np.empty((design.n_predictors, design.layout.block_size))
    g[:, 0] = -w.sum(axis=0)
    g[:, design.mdc_pos] = -(design.h_mdc.T @ w).T
    g[:, design.drg_pos] = -(design.h_drg.T @ w).T
    return g


def largest_gram_eigenvalue(matvec, dim: int, tol: float = 1e-6, max_iter: int = 500) -> float:
    """Power iteration for the top eigenvalue of a PSD operator."""
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = matvec(v)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        new = float(v @ matvec(v))
        if abs(new - est) <= tol * max(new, 1e-300):
            return new
        est = new
    return est


def step_size(design: HierDesign, j: int, tol: float = 1e-6, max_iter: int = 500) -> float:
    """Majorization step for predictor j: 1 / (0.25 * lambda_max of the
    block Gram matrix). Returns +inf for an all-zero column (block skipped).

    The 1/4 curvature bound makes the step valid at every iterate, so it is
    computed once per block instead of per iteration.
    """
    xj = design.x[:, j]
    if not np.any(xj):
        return float("inf")
    xsq = xj * xj
    drg_code, mdc_code = design.drg_code, design.mdc_code
    n_drg, n_mdc = design.spec.n_drg, design.spec.n_mdc
    mdc_pos, drg_pos = design.mdc_pos, design.drg_pos
    row_m, row_d = design.row_mdc_col, design.row_drg_col

    def matvec(v):
        s = v[0] + v[row_m] + v[row_d]
        z = xsq * s
        out = np.empty_like(v)
        out[0] = z.sum()
        out[mdc_pos] = np.bincount(mdc_code, weights=z, minlength=n_mdc)
        out[drg_pos] = np.bincount(drg_code, weights=z, minlength=n_drg)
        return out

    lam_max = largest_gram_eigenvalue(matvec, design.layout.block_size, tol=tol, max_iter=max_iter)
    if lam_max <= 0.0:
        return float("inf")
    return 1.0 / (CURVATURE_BOUND * lam_max)


def all_step_sizes(design: HierDesign) -> np.ndarray:
    return np.array([step_size(design, j) for j in range(design.n_predictors)])


class LogisticState:
    """Single-writer cache of the linear predictor and fitted probabilities.

    The solver owns one of these and mutates coefficients only through
    update_block, which keeps eta/prob incrementally consistent. Setting
    coefficients without refreshing marks the cache stale and gradient
    queries raise StaleCacheError until refresh() is called.
    """

    def __init__(self, design: HierDesign, y, theta: np.ndarray = None):
        self.design = design
        self.y = np.asarray(y, dtype=np.float64)
        if self.y.shape[0] != design.n:
            raise DimensionMismatchError("y length does not match design rows")
        if theta is None:
            theta = np.zeros((design.n_predictors, design.layout.block_size))
        self.theta = np.array(theta, dtype=np.float64)
        self._stale = True
        self.refresh()

    def refresh(self):
        self.eta = self.design.linear_predictor(self.theta)
        self.prob = expit(self.eta)
        self._stale = False

    def set_theta(self, theta, refresh: bool = True):
        self.theta = np.array(theta, dtype=np.float64)
        if refresh:
            self.refresh()
        else:
            self._stale = True

    def update_block(self, j: int, new_block: np.ndarray):
        delta = new_block - self.theta[j]
        if np.any(delta):
            d = self.design
            self.eta += d.x[:, j] * (
                delta[0] + delta[d.row_mdc_col] + delta[d.row_drg_col]
            )
            self.prob = expit(self.eta)
            self.theta[j] = new_block

    def nll(self) -> float:
        self._guard()
        return nll_from_eta(self.eta, self.y)

    def residual(self) -> np.ndarray:
        self._guard()
        return self.y - self.prob

    def grad_block(self, j: int) -> np.ndarray:
        self._guard()
        return _grad_block_from_resid(self.design, self.y - self.prob, j)

    def grad_all(self) -> np.ndarray:
        self._guard()
        return _grad_all_from_resid(self.design, self.y - self.prob)

    def _guard(self):
        if self._stale:
            raise StaleCacheError(
                "coefficients changed without refresh(); caches are stale"
            )
