"""Synthetic data with heterogeneous per-DRG covariate distributions and
hierarchically gated true coefficients.

Covariates come in a 1:1:1 mix of Gaussian, Bernoulli and Poisson columns
whose parameters are themselves drawn per (predictor, DRG) from common
distributions controlled by a dispersion knob. True effects decompose as
mu + eta^mdc + delta_drg where the MDC and DRG parts are gated by shared
Bernoulli(gamma) switches: a DRG-level effect can be nonzero only when its
MDC-level gate is on. The scale parameters of the common distributions are
read as standard deviations.

Per-DRG intercepts are calibrated by Monte Carlo bisection so each
subgroup (and hence the marginal) event rate sits near the target.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

from .errors import CalibrationFailedError
from .hierarchy import INTERCEPT_NAME, HierDataset, HierarchySpec, build_hierarchy

DIST_NORMAL = "normal"
DIST_BERNOULLI = "bernoulli"
DIST_POISSON = "poisson"


@dataclass
class SimConfig:
    p: int = 60
    mdc_count: int = 10
    drgs_per_mdc: int = 4
    n_per_drg: int = 30
    dispersion: float = 1.0       # heterogeneity of covariate distributions
    sparsity_logit: float = 0.0   # logit of the gate probability gamma
    shrink: float = 1.0           # multiplies the MDC-level effects only
    target_event_rate: float = 0.17
    n_test_per_drg: int = 500
    seed: int = 0
    calibration_draws: int = 10_000

    def __post_init__(self):
        if self.p % 3 != 0:
            raise ValueError("p must be divisible by 3 for the 1:1:1 mix")
        if min(self.p, self.mdc_count, self.drgs_per_mdc, self.n_per_drg) <= 0:
            raise ValueError("all counts must be positive")

    @property
    def gamma(self) -> float:
        return float(expit(self.sparsity_logit))

    @property
    def n_drg(self) -> int:
        return self.mdc_count * self.drgs_per_mdc

    def taxonomy_pairs(self) -> list:
        pairs = []
        width_m = len(str(self.mdc_count))
        width_d = len(str(self.n_drg))
        k = 1
        for m in range(1, self.mdc_count + 1):
            for _ in range(self.drgs_per_mdc):
                pairs.append((f"d{k:0{width_d}d}", f"M{m:0{width_m}d}"))
                k += 1
        return pairs

    def distribution_of(self, j: int) -> str:
        # predictors 1..p (0 is the intercept); contiguous thirds
        third = self.p // 3
        if j <= third:
            return DIST_NORMAL
        if j <= 2 * third:
            return DIST_BERNOULLI
        return DIST_POISSON


@dataclass
class SimTruth:
    spec: HierarchySpec
    dist_kind: list                 # per predictor 1..p
    normal_mean: np.ndarray         # (p, n_drg), zero where unused
    normal_sd: np.ndarray
    bern_p: np.ndarray
    pois_rate: np.ndarray
    mu: np.ndarray                  # (p,)
    eta: np.ndarray                 # (p, n_mdc)
    delta: np.ndarray               # (p, n_drg)
    intercepts: np.ndarray = field(default=None)  # (n_drg,), set by calibration

    def beta_for_drg_code(self, d: int, mdc_of_drg: np.ndarray) -> np.ndarray:
        return self.mu + self.eta[:, mdc_of_drg[d]] + self.delta[:, d]

    def to_jsonable(self) -> dict:
        return {
            "drg_ids": list(self.spec.drg_ids),
            "mdc_ids": list(self.spec.mdc_ids),
            "parent": dict(self.spec.parent),
            "dist_kind": self.dist_kind,
            "normal_mean": self.normal_mean.tolist(),
            "normal_sd": self.normal_sd.tolist(),
            "bern_p": self.bern_p.tolist(),
            "pois_rate": self.pois_rate.tolist(),
            "mu": self.mu.tolist(),
            "eta": self.eta.tolist(),
            "delta": self.delta.tolist(),
            "intercepts": self.intercepts.tolist() if self.intercepts is not None else None,
        }


def draw_covariate_params(config: SimConfig, rng: np.random.Generator):
    """Per-(predictor, DRG) distribution parameters.

    normal mean ~ N(0, sd=dispersion/2); normal sd ~ Gamma(shape 1,
    mean dispersion); Bernoulli p ~ N(0.5, sd=dispersion/10) truncated to
    [0.01, 0.99]; Poisson rate = round(N(3, sd=dispersion/10)) clamped >= 1.
    """
    p, nd = config.p, config.n_drg
    disp = config.dispersion
    kinds = [config.distribution_of(j) for j in range(1, p + 1)]
    normal_mean = np.zeros((p, nd))
    normal_sd = np.ones((p, nd))
    bern_p = np.full((p, nd), 0.5)
    pois_rate = np.full((p, nd), 3.0)
    for i, kind in enumerate(kinds):
        if kind == DIST_NORMAL:
            normal_mean[i] = rng.normal(0.0, disp / 2.0, size=nd) if disp > 0 else 0.0
            normal_sd[i] = rng.gamma(shape=1.0, scale=disp, size=nd) if disp > 0 else 0.0
            # a zero sd Gamma draw would make the column constant
            normal_sd[i] = np.maximum(normal_sd[i], 1e-8)
        elif kind == DIST_BERNOULLI:
            bern_p[i] = _truncated_normal(rng, 0.5, disp / 10.0, 0.01, 0.99, nd)
        else:
            lam = np.floor(rng.normal(3.0, disp / 10.0, size=nd) + 0.5)
            pois_rate[i] = np.maximum(lam, 1.0)
    return kinds, normal_mean, normal_sd, bern_p, pois_rate


def _truncated_normal(rng, mean, sd, lo, hi, size):
    if sd == 0.0:
        return np.full(size, mean)
    out = rng.normal(mean, sd, size=size)
    bad = (out < lo) | (out > hi)
    while np.any(bad):
        out[bad] = rng.normal(mean, sd, size=int(bad.sum()))
        bad = (out < lo) | (out > hi)
    return out


def draw_coefficients(config: SimConfig, rng: np.random.Generator):
    """mu ~ U(-1,1); eta = u * a * shrink with u ~ U(-1,1) and gate
    a ~ Bern(gamma) per (predictor, MDC); delta = v * a * b with the same
    MDC gate and its own b ~ Bern(gamma) per (predictor, DRG)."""
    p, nm, nd = config.p, config.mdc_count, config.n_drg
    gamma = config.gamma
    mu = rng.uniform(-1.0, 1.0, size=p)
    u = rng.uniform(-1.0, 1.0, size=(p, nm))
    a = (rng.random((p, nm)) < gamma).astype(float)
    v = rng.uniform(-1.0, 1.0, size=(p, nd))
    b = (rng.random((p, nd)) < gamma).astype(float)
    eta = u * a * config.shrink
    mdc_of = np.repeat(np.arange(nm), config.drgs_per_mdc)
    delta = v * a[:, mdc_of] * b
    return mu, eta, delta


def build_truth(config: SimConfig, rng: np.random.Generator) -> SimTruth:
    pairs = config.taxonomy_pairs()
    spec = build_hierarchy(pairs, [d for d, _ in pairs])  # placeholder counts of 1
    kinds, nm, nsd, bp, pr = draw_covariate_params(config, rng)
    mu, eta, delta = draw_coefficients(config, rng)
    return SimTruth(
        spec=spec, dist_kind=kinds, normal_mean=nm, normal_sd=nsd,
        bern_p=bp, pois_rate=pr, mu=mu, eta=eta, delta=delta,
    )


def _draw_covariates(truth: SimTruth, d: int, n: int, rng) -> np.ndarray:
    p = len(truth.dist_kind)
    x = np.empty((n, p))
    for i, kind in enumerate(truth.dist_kind):
        if kind == DIST_NORMAL:
            x[:, i] = rng.normal(truth.normal_mean[i, d], truth.normal_sd[i, d], size=n)
        elif kind == DIST_BERNOULLI:
            x[:, i] = (rng.random(n) < truth.bern_p[i, d]).astype(float)
        else:
            x[:, i] = rng.poisson(truth.pois_rate[i, d], size=n).astype(float)
    return x


def calibrate_intercepts(config: SimConfig, truth: SimTruth, rng) -> np.ndarray:
    """Bisection per DRG on Monte Carlo probe draws so that the expected
    event rate hits the target."""
    nd = config.n_drg
    mdc_of = np.repeat(np.arange(config.mdc_count), config.drgs_per_mdc)
    target = config.target_event_rate
    intercepts = np.empty(nd)
    for d in range(nd):
        probe = _draw_covariates(truth, d, config.calibration_draws, rng)
        scores = probe @ truth.beta_for_drg_code(d, mdc_of)
        if not np.all(np.isfinite(scores)):
            raise CalibrationFailedError(
                f"non-finite linear predictor for DRG index {d}"
            )
        # bracket wide enough to push every probe row to 0 or 1
        span = float(np.max(np.abs(scores))) + 40.0
        lo, hi = -span, span
        if expit(lo + scores).mean() > target or expit(hi + scores).mean() < target:
            raise CalibrationFailedError(
                f"target rate {target} unreachable for DRG index {d}"
            )
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if expit(mid + scores).mean() < target:
                lo = mid
            else:
                hi = mid
        intercepts[d] = 0.5 * (lo + hi)
    return intercepts


def generate_dataset(config: SimConfig, truth: SimTruth, n_per_drg: int, rng) -> HierDataset:
    """Draw covariates and outcomes for every DRG under the calibrated
    truth; the intercept column is predictor index 0."""
    if truth.intercepts is None:
        raise ValueError("truth has no calibrated intercepts")
    nd = config.n_drg
    mdc_of = np.repeat(np.arange(config.mdc_count), config.drgs_per_mdc)
    xs, ys, labels = [], [], []
    for d in range(nd):
        x = _draw_covariates(truth, d, n_per_drg, rng)
        eta = truth.intercepts[d] + x @ truth.beta_for_drg_code(d, mdc_of)
        y = (rng.random(n_per_drg) < expit(eta)).astype(float)
        xs.append(x)
        ys.append(y)
        labels += [truth.spec.drg_ids[d]] * n_per_drg
    x = np.vstack(xs)
    full = np.column_stack([np.ones(x.shape[0]), x])
    names = [INTERCEPT_NAME] + [f"x{j:03d}" for j in range(1, config.p + 1)]
    return HierDataset(
        y=np.concatenate(ys), x=full, drg=np.array(labels, dtype=object), names=names
    )


@dataclass
class SimulatedStudy:
    config: SimConfig
    truth: SimTruth
    train: HierDataset
    test: HierDataset


def simulate_study(config: SimConfig, seed=None) -> SimulatedStudy:
    """Truth + calibrated intercepts + train/test datasets, all from one
    seeded stream so a (config, seed) pair fully determines the output."""
    root = np.random.SeedSequence(config.seed if seed is None else seed)
    k_truth, k_cal, k_train, k_test = root.spawn(4)
    truth = build_truth(config, np.random.default_rng(k_truth))
    truth.intercepts = calibrate_intercepts(config, truth, np.random.default_rng(k_cal))
    train = generate_dataset(config, truth, config.n_per_drg, np.random.default_rng(k_train))
    test = generate_dataset(config, truth, config.n_test_per_drg, np.random.default_rng(k_test))
    return SimulatedStudy(config=config, truth=truth, train=train, test=test)


def write_truth_json(truth: SimTruth, path) -> None:
    with open(path, "w") as fh:
        json.dump(truth.to_jsonable(), fh, sort_keys=True)
        fh.write("\n")


def expected_logit_intercept(rate: float) -> float:
    return math.log(rate / (1.0 - rate))
