import numpy as np
import pytest

from hierlasso.design import (
    HierLayout,
    build_hier_design,
    penalty_weights,
    standardize,
)
from hierlasso.errors import UnknownDrgError
from hierlasso.hierarchy import build_hierarchy


def small_spec():
    labels = ["d1", "d1", "d2", "d3", "d3"]
    return build_hierarchy([("d1", "M1"), ("d2", "M1"), ("d3", "M2")], labels), labels


def dyadic(rng, shape, scale=4):
    """Small dyadic rationals: float arithmetic on them is exact, so any
    summation order gives bitwise-identical results."""
    return rng.integers(-4 * scale, 4 * scale + 1, size=shape) / scale


def test_standardize_two_point_column():
    xs, stats = standardize(np.array([[1.0], [3.0]]))
    assert np.allclose(xs[:, 0], [-1.0, 1.0])
    assert stats.means[0] == 2.0
    assert stats.scales[0] == 1.0  # population sd of [1, 3]
    assert not stats.constant[0]


def test_standardize_constant_column_passthrough():
    x = np.array([[5.0, 1.0], [5.0, 2.0], [5.0, 3.0]])
    xs, stats = standardize(x)
    assert np.array_equal(xs[:, 0], x[:, 0])
    assert stats.means[0] == 5.0 and stats.scales[0] == 1.0 and stats.constant[0]
    # applying the stats to fresh data leaves the constant column alone
    assert np.array_equal(stats.apply(x)[:, 0], x[:, 0])


def test_standardize_idempotent():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((50, 3))
    xs, _ = standardize(x)
    xs2, stats2 = standardize(xs)
    assert np.allclose(xs2, xs, atol=1e-12)
    assert np.allclose(stats2.means, 0.0, atol=1e-12)
    assert np.allclose(stats2.scales, 1.0, atol=1e-12)


def test_layout_dimensions():
    spec, labels = small_spec()
    layout = HierLayout(spec=spec, n_predictors=1)
    assert layout.block_size == 1 + 2 + 3 == 6
    assert layout.n_columns == 6
    mdc_slot, drg_slot, ranges = layout.within_block()
    assert mdc_slot == {"M1": 1, "M2": 4}
    assert drg_slot == {"d1": 2, "d2": 3, "d3": 5}
    assert ranges == [(1, 4), (4, 6)]


def test_layout_describe_roundtrip():
    spec, labels = small_spec()
    layout = HierLayout(spec=spec, n_predictors=2)
    seen = [layout.describe(c) for c in range(layout.n_columns)]
    assert seen[0] == (0, "overall", None)
    assert seen[1] == (0, "mdc", "M1")
    assert seen[2] == (0, "drg", "d1")
    assert seen[6] == (1, "overall", None)


def test_design_row_sparsity_and_nnz():
    spec, labels = small_spec()
    rng = np.random.default_rng(1)
    x = rng.standard_normal((5, 2))
    x[0, 1] = 0.0  # punch a hole: nnz(X) = 9
    d = build_hier_design(x, labels, spec)
    assert d.xh.shape == (5, 2 * 6)
    assert d.xh.nnz == 3 * 9
    # each row touches only its own overall/MDC/DRG columns
    row = np.asarray(d.xh[0].todense()).ravel()
    nz_cols = np.flatnonzero(row)
    levels = {d.layout.describe(c)[1:] for c in nz_cols}
    assert levels == {("overall", None), ("mdc", "M1"), ("drg", "d1")}


def test_reconstruction_identity_exact():
    spec, labels = small_spec()
    rng = np.random.default_rng(2)
    x = dyadic(rng, (5, 2))
    d = build_hier_design(x, labels, spec)
    theta = dyadic(rng, (2, 6), scale=8)
    via_matrix = d.xh @ theta.ravel()
    by_row = np.empty(5)
    for i, lab in enumerate(labels):
        beta = (
            theta[:, 0]
            + theta[:, d.mdc_slot[spec.mdc_of(lab)]]
            + theta[:, d.drg_slot[lab]]
        )
        by_row[i] = x[i] @ beta
    assert np.array_equal(via_matrix, by_row)
    assert np.array_equal(d.linear_predictor(theta), by_row)


def test_reconstruction_identity_random_float():
    spec, labels = small_spec()
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 3))
    d = build_hier_design(x, labels, spec)
    for _ in range(20):
        theta = rng.standard_normal((3, 6))
        assert np.allclose(
            d.xh @ theta.ravel(), d.linear_predictor(theta), rtol=0, atol=1e-12
        )


def test_design_rejects_unknown_drg():
    spec, _ = small_spec()
    with pytest.raises(UnknownDrgError):
        build_hier_design(np.ones((2, 1)), ["d1", "d9"], spec)


def test_penalty_weights_fourth_root():
    labels = ["d1"] * 1 + ["d2"] * 15
    spec = build_hierarchy([("d1", "M1"), ("d2", "M2")], labels)
    w = penalty_weights(spec)
    assert w.k_mdc["M1"] == pytest.approx(16.0 ** 0.25)  # = 2
    assert w.k_drg["d1"] == pytest.approx(2.0)
    labels81 = ["d1"] * 1 + ["d2"] * 80
    spec81 = build_hierarchy([("d1", "M1"), ("d2", "M2")], labels81)
    assert penalty_weights(spec81).k_drg["d1"] == pytest.approx(3.0)


def test_penalty_weights_single_group_and_zero_count():
    spec = build_hierarchy([("d1", "M1"), ("d2", "M1")], ["d1"] * 7)
    w = penalty_weights(spec)
    assert w.k_drg["d1"] == pytest.approx(1.0)
    assert w.k_drg["d2"] == float("inf")
    assert w.k_mdc["M1"] == pytest.approx(1.0)


def test_weight_monotonicity():
    rng = np.random.default_rng(4)
    counts = rng.integers(1, 50, size=8)
    labels = []
    for i, c in enumerate(counts):
        labels += [f"d{i}"] * int(c)
    spec = build_hierarchy([(f"d{i}", "M1") for i in range(8)], labels)
    w = penalty_weights(spec)
    order = np.argsort(counts)
    ks = [w.k_drg[f"d{i}"] for i in order]
    assert all(a >= b - 1e-12 for a, b in zip(ks, ks[1:]))
    assert all(k >= 1.0 for k in ks)
