"""Linear blending of two forecasters and two-stage (linear -> boosted trees) stacking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, TooFewRows
from .features import FeatureMatrix
from .forecasters import GbtModel, GbtParams, LassoModel, check_columns, fit_gbt, fit_lasso

LEVEL1_COLUMN = "level1Pred"

# reciprocal condition number below which the blend normal matrix counts as singular
_SINGULAR_RCOND = 1e-10


@dataclass(frozen=True)
class BlendModel:
    w0: float
    wa: float
    wb: float
    singular: bool = False

    def to_dict(self) -> dict:
        return {"kind": "blend", "w0": self.w0, "wa": self.wa, "wb": self.wb, "singular": self.singular}

    @classmethod
    def from_dict(cls, doc: dict) -> "BlendModel":
        return cls(float(doc["w0"]), float(doc["wa"]), float(doc["wb"]), bool(doc.get("singular", False)))


def _as_vectors(*arrays):
    out = [np.asarray(a, dtype=float).ravel() for a in arrays]
    if len({a.shape[0] for a in out}) != 1:
        raise LengthMismatch(f"lengths differ: {[a.shape[0] for a in out]}")
    return out


def fit_blend(pred_a, pred_b, y) -> BlendModel:
    """OLS of ``y`` on ``[1, pred_a, pred_b]``.

    A (near-)singular design is flagged and solved by minimum-norm least
    squares, which splits weight equally between collinear components and
    keeps the fit a projection, so it never loses to either input.
    """
    a, b, y = _as_vectors(pred_a, pred_b, y)
    if y.shape[0] < 3:
        raise LengthMismatch("blending needs at least 3 points")
    D = np.column_stack([np.ones_like(a), a, b])
    A = D.T @ D
    if 1.0 / np.linalg.cond(A) < _SINGULAR_RCOND:
        w = np.linalg.lstsq(D, y, rcond=None)[0]
        return BlendModel(float(w[0]), float(w[1]), float(w[2]), singular=True)
    w = np.linalg.solve(A, D.T @ y)
    return BlendModel(float(w[0]), float(w[1]), float(w[2]))


def predict_blend(model: BlendModel, pred_a, pred_b) -> np.ndarray:
    a, b = _as_vectors(pred_a, pred_b)
    return model.w0 + model.wa * a + model.wb * b


@dataclass(frozen=True, eq=False)
class StackModel:
    level1: LassoModel
    level2: GbtModel
    level1_feature_name: str = LEVEL1_COLUMN
    oof_predictions: np.ndarray | None = None
    # level 2 boosts from the level-1 prediction instead of from mean(y)
    offset: bool = True

    def to_dict(self) -> dict:
        return {
            "kind": "stack",
            "level1": self.level1.to_dict(),
            "level2": self.level2.to_dict(),
            "level1_feature_name": self.level1_feature_name,
            "offset": self.offset,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "StackModel":
        return cls(
            LassoModel.from_dict(doc["level1"]),
            GbtModel.from_dict(doc["level2"]),
            doc["level1_feature_name"],
            offset=bool(doc.get("offset", True)),
        )


def contiguous_folds(n: int, folds: int) -> list[np.ndarray]:
    bounds = np.linspace(0, n, folds + 1).astype(int)
    return [np.arange(bounds[k], bounds[k + 1]) for k in range(folds)]


def out_of_fold_level1(fm: FeatureMatrix, folds: int, lam: float = 0.0) -> np.ndarray:
    """Level-1 predictions where each row's value comes from a model not trained on it.

    Folds are contiguous blocks in row (time) order.
    """
    oof = np.empty(fm.n)
    for test in contiguous_folds(fm.n, folds):
        mask = np.ones(fm.n, dtype=bool)
        mask[test] = False
        model = fit_lasso(fm.rows(mask), lam)
        oof[test] = model.predict(fm.X[test])
    return oof


def fit_stack(
    fm: FeatureMatrix,
    gbt_params: GbtParams = GbtParams(),
    folds: int = 5,
    seed: int | None = None,
    lam: float = 0.0,
    offset: bool = True,
) -> StackModel:
    """Linear model first, boosted trees on ``[X, level-1 prediction]`` second.

    With ``offset`` the trees start from the out-of-fold level-1 prediction
    and learn what it misses, so a target the linear model already explains
    stays explained. Without it they start from mean(y).
    ``seed`` overrides ``gbt_params.seed`` when given.
    """
    if folds < 2:
        raise TooFewRows("stacking needs at least 2 folds")
    if fm.n < 2 * folds:
        raise TooFewRows(f"need at least {2 * folds} rows for {folds} folds, got {fm.n}")
    if seed is not None:
        gbt_params = GbtParams(**{**gbt_params.__dict__, "seed": seed})
    oof = out_of_fold_level1(fm, folds, lam)
    aug = fm.with_column(LEVEL1_COLUMN, oof)
    if offset:
        aug = FeatureMatrix(aug.column_names, aug.X, fm.y - oof, aug.row_days, aug.row_stores)
    level2 = fit_gbt(aug, gbt_params)
    level1 = fit_lasso(fm, lam)
    return StackModel(level1, level2, LEVEL1_COLUMN, oof, offset)


def predict_stack(model: StackModel, fm: FeatureMatrix) -> np.ndarray:
    check_columns(model.level1.column_names, fm)
    lvl1 = model.level1.predict(fm.X)
    out = model.level2.predict(np.column_stack([fm.X, lvl1]))
    return lvl1 + out if model.offset else out
