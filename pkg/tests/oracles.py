"""Independent reference implementations used only by the test suite.

Nothing here shares code paths with the package internals it checks: the
prox reference solves the dual projection problem numerically, gradients
come from central finite differences, eigenvalues from dense solves, path
solutions from an unscreened accelerated proximal-gradient loop on the
materialized expanded matrix, and the ranking metrics from exhaustive
enumeration.
"""

from __future__ import annotations

import numpy as np

from hierlasso.objective import nll


# ---------------------------------------------------------------------------
# prox objective and its numerical minimizer
# ---------------------------------------------------------------------------

def prox_groups(t, lam, alpha1, alpha2, layout, penalize_mu=True):
    """(indices, weight) pairs defining the penalty as a sum of weighted
    group norms (singletons give the L1 part)."""
    groups = []
    tl = t * lam
    if penalize_mu:
        groups.append((np.arange(layout.size), tl))
    else:
        groups.append((np.flatnonzero(layout.deviation_mask), tl))
    for s, e in layout.mdc_ranges:
        groups.append((np.arange(s, e), tl * alpha1))
        for i in range(s + 1, e):
            groups.append((np.array([i]), tl * alpha2))
    return [(idx, w) for idx, w in groups if w > 0.0 and idx.size > 0]


def prox_objective(x, z, t, lam, alpha1, alpha2, layout, penalize_mu=True):
    x = np.asarray(x, dtype=np.float64)
    val = 0.5 * np.sum((x - z) ** 2)
    for idx, w in prox_groups(t, lam, alpha1, alpha2, layout, penalize_mu):
        val += w * np.linalg.norm(x[idx])
    return float(val)


def prox_reference(z, t, lam, alpha1, alpha2, layout, penalize_mu=True,
                   gap_tol=1e-13, max_sweeps=200_000):
    """Numerical minimizer of the prox objective, independent of the
    composed closed form.

    Works on the dual: min over {xi_G : |xi_G| <= w_G} of
    0.5*|z - sum_G xi_G|^2, solved by cyclic exact projection updates per
    group. The primal candidate is x = z - sum xi_G and the duality gap
    bounds |x - x*|^2 <= 2*gap because the primal objective is 1-strongly
    convex. Raises if the requested gap is not reached.
    """
    z = np.asarray(z, dtype=np.float64)
    groups = prox_groups(t, lam, alpha1, alpha2, layout, penalize_mu)
    if not groups:
        return z.copy()
    xi = [np.zeros(idx.size) for idx, _ in groups]
    s = np.zeros_like(z)
    for sweep in range(max_sweeps):
        for g, (idx, w) in enumerate(groups):
            r = z[idx] - s[idx] + xi[g]
            nr = np.linalg.norm(r)
            new = r if nr <= w else (w / nr) * r
            s[idx] += new - xi[g]
            xi[g] = new
        if sweep % 8 == 7 or sweep < 4:
            x = z - s
            primal = prox_objective(x, z, t, lam, alpha1, alpha2, layout, penalize_mu)
            dual = float(s @ z - 0.5 * s @ s)
            if primal - dual <= gap_tol:
                return x
    raise RuntimeError(f"prox reference did not reach gap {gap_tol}")


def prox_subgradient_residual(x, z, t, lam, alpha1, alpha2, layout,
                              penalize_mu=True, max_sweeps=100_000):
    """Distance from 0 to the subdifferential of the prox objective at x.

    Nonzero groups contribute their fixed gradient w*x_G/|x_G|; zero groups
    contribute any ball element, so the residual is a projection onto a sum
    of balls, solved with the same cyclic scheme as prox_reference.
    """
    x = np.asarray(x, dtype=np.float64)
    c = x - np.asarray(z, dtype=np.float64)
    free = []
    for idx, w in prox_groups(t, lam, alpha1, alpha2, layout, penalize_mu):
        xg = x[idx]
        if np.any(xg != 0.0):
            c[idx] += w * xg / np.linalg.norm(xg)
        else:
            free.append((idx, w))
    if not free:
        return float(np.linalg.norm(c))
    xi = [np.zeros(idx.size) for idx, _ in free]
    s = np.zeros_like(c)
    best = np.inf
    for sweep in range(max_sweeps):
        for g, (idx, w) in enumerate(free):
            r = -(c[idx] + s[idx] - xi[g])
            nr = np.linalg.norm(r)
            new = r if nr <= w else (w / nr) * r
            s[idx] += new - xi[g]
            xi[g] = new
        resid = float(np.linalg.norm(c + s))
        if resid >= best - 1e-15:
            return resid
        best = resid
    return best


# ---------------------------------------------------------------------------
# calculus oracles
# ---------------------------------------------------------------------------

def fd_grad_block(theta, design, y, j, step=1e-5):
    """Central finite differences of the loss over predictor j's block."""
    theta = np.array(theta, dtype=np.float64)
    b = design.layout.block_size
    g = np.empty(b)
    for k in range(b):
        tp = theta.copy()
        tp[j, k] += step
        tm = theta.copy()
        tm[j, k] -= step
        g[k] = (nll(tp, design, y) - nll(tm, design, y)) / (2.0 * step)
    return g


def dense_block_eigmax(design, j):
    block = design.block_columns_dense(j)
    return float(np.linalg.eigvalsh(block.T @ block)[-1])


# ---------------------------------------------------------------------------
# unscreened accelerated proximal-gradient path reference
# ---------------------------------------------------------------------------

def _global_step(design):
    xh = np.asarray(design.xh.todense())
    sv = np.linalg.svd(xh, compute_uv=False)
    return 4.0 / (sv[0] ** 2)


def reference_fit_path(design, y, lambdas, prox_block, penalty_value,
                       rel_tol=1e-12, max_iter=500_000):
    """Full proximal gradient (FISTA with monotone restart) over every
    predictor block at once, no screening, warm-started along the path.

    prox_block(j, v, t, lam) -> new block; penalty_value(theta, lam) -> float.
    Returns (list of theta arrays, list of objective values).
    """
    from scipy.special import expit

    y = np.asarray(y, dtype=np.float64)
    p, b = design.n_predictors, design.layout.block_size
    xh = np.asarray(design.xh.todense())
    t = _global_step(design)

    def full_obj(flat, lam):
        eta = xh @ flat
        return float(np.logaddexp(0.0, eta).sum() - y @ eta) + penalty_value(
            flat.reshape(p, b), lam
        )

    def prox_all(flat, lam, step):
        th = flat.reshape(p, b)
        out = np.empty_like(th)
        for j in range(p):
            out[j] = prox_block(j, th[j], step, lam)
        return out.ravel()

    flat = np.zeros(p * b)
    thetas, objs = [], []
    for lam in lambdas:
        zk = flat.copy()
        tk = 1.0
        obj = full_obj(flat, lam)
        for _ in range(max_iter):
            eta = xh @ zk
            grad = xh.T @ (expit(eta) - y)
            cand = prox_all(zk - t * grad, lam, t)
            cand_obj = full_obj(cand, lam)
            if cand_obj > obj:  # monotone restart
                zk = flat.copy()
                tk = 1.0
                eta = xh @ zk
                grad = xh.T @ (expit(eta) - y)
                cand = prox_all(zk - t * grad, lam, t)
                cand_obj = full_obj(cand, lam)
            tnew = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
            zk = cand + ((tk - 1.0) / tnew) * (cand - flat)
            tk = tnew
            done = obj - cand_obj <= rel_tol * max(abs(obj), 1.0) and cand_obj <= obj
            flat, obj = cand, cand_obj
            if done:
                break
        thetas.append(flat.reshape(p, b).copy())
        objs.append(obj)
    return thetas, objs


# ---------------------------------------------------------------------------
# ranking metric oracles
# ---------------------------------------------------------------------------

def pairwise_auroc(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    total = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                total += 1.0
            elif sp == sn:
                total += 0.5
    return total / (len(pos) * len(neg))


def enumerated_average_precision(scores, labels):
    """Walk ranks in descending score (stable for ties) and average the
    precision at each positive."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    order = np.argsort(-scores, kind="stable")
    hits = 0
    ap = 0.0
    for rank, i in enumerate(order, start=1):
        if labels[i] == 1:
            hits += 1
            ap += hits / rank
    return ap / labels.sum()
