import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retailts.errors import ColumnMismatch, InputError
from retailts.features import FeatureMatrix
from retailts.forecasters import GbtModel, GbtParams, fit_gbt, predict
from retailts.forecasters.gbt import best_split, fit_tree


def fm_from(X, y):
    X = np.asarray(X, float)
    return FeatureMatrix(tuple(f"x{j}" for j in range(X.shape[1])), X, np.asarray(y, float), np.arange(len(y)))


def data(seed, n=200, p=4):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    y = np.sin(X[:, 0]) + 0.5 * (X[:, 1] > 0) + 0.1 * rng.standard_normal(n)
    return fm_from(X, y)


def brute_split(X, r, min_leaf):
    """Try every feature and every distinct cut; SSE reduction by direct sums."""
    best = None
    sse = lambda v: float(((v - v.mean()) ** 2).sum())
    total = sse(r)
    for f in range(X.shape[1]):
        vals = np.unique(X[:, f])
        for a, b in zip(vals[:-1], vals[1:]):
            thr = 0.5 * (a + b)
            left = X[:, f] <= thr
            if left.sum() < min_leaf or (~left).sum() < min_leaf:
                continue
            gain = total - sse(r[left]) - sse(r[~left])
            if best is None or gain > best[0] + 1e-9:
                best = (gain, f, thr)
    return best


@pytest.mark.parametrize("seed", range(10))
def test_depth_zero_single_tree_is_mean(seed):
    fm = data(seed)
    m = fit_gbt(fm, GbtParams(n_trees=1, max_depth=0, learning_rate=1.0, subsample=1.0))
    np.testing.assert_array_equal(m.predict(fm.X), np.full(fm.n, fm.y.mean()))


def test_single_binary_split_is_exact():
    x = np.array([0, 0, 1, 1, 0, 1, 0, 1, 1, 0], float)
    y = np.where(x > 0, 5.0, -2.0)
    m = fit_gbt(fm_from(x[:, None], y), GbtParams(n_trees=1, max_depth=1, learning_rate=1.0,
                                                   subsample=1.0, min_leaf=1))
    np.testing.assert_allclose(m.predict(x[:, None]), y, atol=1e-12)


def test_training_loss_non_increasing():
    fm = data(1)
    m = fit_gbt(fm, GbtParams(subsample=1.0))
    losses = [float(np.mean((fm.y - p) ** 2)) for p in m.staged_predict(fm.X)]
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_staged_matches_resummed_trees():
    fm = data(2)
    m = fit_gbt(fm, GbtParams(n_trees=30))
    for k, staged in enumerate(m.staged_predict(fm.X)):
        manual = m.base_score + sum(m.learning_rate * t.predict(fm.X) for t in m.trees[:k])
        np.testing.assert_allclose(staged, manual, atol=1e-12)
    np.testing.assert_allclose(staged, m.predict(fm.X), atol=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_best_split_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    X = np.round(rng.normal(size=(40, 3)), 1)
    r = rng.normal(size=40) + (X[:, seed % 3] > 0)
    got = best_split(X, r, 3)
    want = brute_split(X, r, 3)
    assert got[1] == want[1]
    assert got[2] == pytest.approx(want[2])
    assert got[0] == pytest.approx(want[0], rel=1e-9)


def test_split_ties_prefer_lowest_feature():
    X = np.array([[0, 0], [0, 0], [1, 1], [1, 1]], float)
    r = np.array([0, 0, 1, 1], float)
    assert best_split(X, r, 1)[1] == 0


def test_min_leaf_respected():
    fm = data(3, n=60)
    m = fit_gbt(fm, GbtParams(n_trees=5, max_depth=6, min_leaf=7, subsample=1.0))
    for t in m.trees:
        leaves = t.apply(fm.X)
        assert np.bincount(leaves)[np.unique(leaves)].min() >= 7


def test_seed_determinism_and_round_trip():
    fm = data(4)
    a = fit_gbt(fm, GbtParams(n_trees=20, seed=3))
    b = fit_gbt(fm, GbtParams(n_trees=20, seed=3))
    np.testing.assert_array_equal(a.predict(fm.X), b.predict(fm.X))
    c = GbtModel.from_dict(a.to_dict())
    np.testing.assert_array_equal(a.predict(fm.X), c.predict(fm.X))
    assert max(t.depth for t in a.trees) <= 4


def test_predict_checks_columns():
    fm = data(5)
    m = fit_gbt(fm, GbtParams(n_trees=3))
    bad = FeatureMatrix(("x1", "x0", "x2", "x3"), fm.X, fm.y, fm.row_days)
    with pytest.raises(ColumnMismatch):
        predict(m, bad)
    assert np.all(np.isfinite(predict(m, fm)))


def test_param_validation():
    with pytest.raises(InputError):
        GbtParams(subsample=0.0)
    with pytest.raises(InputError):
        GbtParams(learning_rate=1.5)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), depth=st.integers(0, 5))
def test_tree_leaf_values_are_residual_means(seed, depth):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(50, 2))
    r = rng.normal(size=50)
    t = fit_tree(X, r, depth, 2)
    leaves = t.apply(X)
    for leaf in np.unique(leaves):
        assert t.value[leaf] == pytest.approx(r[leaves == leaf].mean(), abs=1e-12)
    assert t.depth <= depth
