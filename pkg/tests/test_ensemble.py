import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from retailts.ensemble import (
    BlendModel,
    StackModel,
    contiguous_folds,
    fit_blend,
    fit_stack,
    out_of_fold_level1,
    predict_blend,
    predict_stack,
)
from retailts.errors import ColumnMismatch, LengthMismatch, TooFewRows
from retailts.evaluation import rmse
from retailts.features import FeatureMatrix
from retailts.forecasters import GbtParams, fit_lasso


def fm_from(X, y, names=None):
    X = np.asarray(X, float)
    names = names or tuple(f"x{j}" for j in range(X.shape[1]))
    return FeatureMatrix(tuple(names), X, np.asarray(y, float), np.arange(len(y)))


def test_exact_component_gets_all_weight(rng):
    y = rng.normal(size=100)
    m = fit_blend(y, y + rng.normal(size=100), y)
    assert (m.w0, m.wa, m.wb) == pytest.approx((0.0, 1.0, 0.0), abs=1e-8)
    assert rmse(y, predict_blend(m, y, y + 1)) == pytest.approx(0.0, abs=1e-8)


def test_collinear_inputs_fall_back_to_average(rng):
    a = rng.normal(size=20)
    m = fit_blend(a, a, a)
    assert m.singular
    assert (m.w0, m.wa, m.wb) == pytest.approx((0.0, 0.5, 0.5), abs=1e-12)
    shifted = fit_blend(a, a, a + 0.1)
    assert shifted.singular and shifted.wa == pytest.approx(shifted.wb, abs=1e-12)


def test_constant_component_still_a_projection(rng):
    y = rng.normal(size=50)
    a = np.full(50, 8.4)
    b = y + rng.normal(size=50)
    m = fit_blend(a, b, y)
    assert m.singular
    assert rmse(y, predict_blend(m, a, b)) <= min(rmse(y, a), rmse(y, b)) + 1e-10


def test_predict_blend_examples():
    np.testing.assert_allclose(predict_blend(BlendModel(0, 0.5, 0.5), [2.0], [4.0]), [3.0])
    np.testing.assert_allclose(predict_blend(BlendModel(1, 0, 0), [7.0, 8.0], [9.0, 1.0]), [1.0, 1.0])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(5, 200))
def test_blend_residuals_orthogonal(seed, n):
    rng = np.random.default_rng(seed)
    y = rng.normal(size=n)
    a = y + rng.normal(size=n)
    b = 0.5 * y + rng.normal(size=n) + 2
    m = fit_blend(a, b, y)
    r = y - predict_blend(m, a, b)
    A = np.column_stack([np.ones(n), a, b])
    np.testing.assert_allclose(A.T @ r, 0.0, atol=1e-8 * max(1.0, float(np.abs(A).max()) * n))
    # the projection can only match or beat either component
    assert rmse(y, y - r) <= min(rmse(y, a), rmse(y, b)) + 1e-10


def test_blend_length_checks():
    with pytest.raises(LengthMismatch):
        fit_blend([1, 2, 3], [1, 2], [1, 2, 3])
    with pytest.raises(LengthMismatch):
        fit_blend([1, 2], [1, 2], [1, 2])
    with pytest.raises(TooFewRows):
        fit_stack(fm_from(np.ones((5, 1)), np.ones(5)), folds=3)


def test_contiguous_folds_partition():
    folds = contiguous_folds(23, 5)
    np.testing.assert_array_equal(np.concatenate(folds), np.arange(23))
    assert all(np.all(np.diff(f) == 1) for f in folds)


def test_oof_predictions_never_see_their_row(rng):
    X = rng.normal(size=(10, 2))
    fm = fm_from(X, X @ [1.0, -2.0] + rng.normal(size=10))
    oof = out_of_fold_level1(fm, 2)
    for f in contiguous_folds(10, 2):
        train = np.setdiff1d(np.arange(10), f)
        m = fit_lasso(fm.rows(train), 0.0)
        np.testing.assert_allclose(oof[f], m.predict(X[f]), atol=1e-10)


def test_stack_on_linear_target_close_to_level1(rng):
    X = rng.normal(size=(300, 4))
    y = X @ [1.0, 0.5, -1.0, 2.0] + 3.0
    tr, te = fm_from(X[:240], y[:240]), fm_from(X[240:], y[240:])
    stack = fit_stack(tr, GbtParams(n_trees=100, seed=0))
    lvl1 = fit_lasso(tr, 0.0)
    s = rmse(te.y, predict_stack(stack, te))
    base = rmse(te.y, lvl1.predict(te.X))
    assert s <= 1.1 * base + 1e-6


def test_predict_stack_is_composition(rng):
    X = rng.normal(size=(80, 3))
    fm = fm_from(X, X.sum(axis=1) + rng.normal(size=80))
    m = fit_stack(fm, GbtParams(n_trees=20, seed=1), folds=4)
    lvl1 = m.level1.predict(X)
    manual = lvl1 + m.level2.predict(np.column_stack([X, lvl1]))
    np.testing.assert_array_equal(predict_stack(m, fm), manual)
    assert np.all(np.isfinite(predict_stack(m, fm)))
    again = StackModel.from_dict(m.to_dict())
    np.testing.assert_array_equal(predict_stack(again, fm), manual)


def test_level2_matrix_has_p_plus_one_columns(rng):
    X = rng.normal(size=(30, 3))
    m = fit_stack(fm_from(X, X[:, 0]), GbtParams(n_trees=3), folds=3)
    assert m.level2.column_names == ("x0", "x1", "x2", "level1Pred")


def test_level1_column_ignores_own_fold_targets(rng):
    """Corrupting one fold's targets only moves the other folds' level-1 values."""
    X = rng.normal(size=(40, 2))
    y = X @ [1.0, 1.0] + rng.normal(size=40)
    folds = contiguous_folds(40, 4)
    base = out_of_fold_level1(fm_from(X, y), 4)
    y2 = y.copy()
    y2[folds[1]] += 100.0
    moved = out_of_fold_level1(fm_from(X, y2), 4)
    np.testing.assert_array_equal(base[folds[1]], moved[folds[1]])
    assert not np.allclose(base[folds[0]], moved[folds[0]])


def test_stack_without_offset_predicts_from_trees_only(rng):
    X = rng.normal(size=(60, 2))
    fm = fm_from(X, X[:, 0] + 1)
    m = fit_stack(fm, GbtParams(n_trees=10), folds=3, offset=False)
    manual = m.level2.predict(np.column_stack([X, m.level1.predict(X)]))
    np.testing.assert_array_equal(predict_stack(m, fm), manual)
    assert m.level2.base_score == pytest.approx(fm.y.mean())


def test_stack_missing_column(rng):
    X = rng.normal(size=(40, 2))
    fm = fm_from(X, X[:, 0], names=("meanLogSales", "promo"))
    m = fit_stack(fm, GbtParams(n_trees=5), folds=2)
    with pytest.raises(ColumnMismatch):
        predict_stack(m, fm.select(["meanLogSales"]))
