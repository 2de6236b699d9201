"""Stochastic gradient boosting with exact-greedy regression trees, squared loss."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError
from ..features import FeatureMatrix


@dataclass(frozen=True)
class GbtParams:
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    subsample: float = 0.8
    min_leaf: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise InputError("n_trees must be >= 1")
        if self.max_depth < 0:
            raise InputError("max_depth must be >= 0")
        if not (0 < self.learning_rate <= 1):
            raise InputError("learning_rate must lie in (0, 1]")
        if not (0 < self.subsample <= 1):
            raise InputError("subsample must lie in (0, 1]")
        if self.min_leaf < 1:
            raise InputError("min_leaf must be >= 1")


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """Array-encoded binary tree. ``feature[i] == -1`` marks a leaf.

    Rows with ``x[feature] <= threshold`` go to ``left``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def depth(self) -> int:
        def walk(i):
            if self.feature[i] < 0:
                return 0
            return 1 + max(walk(self.left[i]), walk(self.right[i]))

        return walk(0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by every row."""
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            rows = np.flatnonzero(inner)
            go_left = X[rows, f[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RegressionTree":
        return cls(
            np.asarray(doc["feature"], dtype=np.int64),
            np.asarray(doc["threshold"], dtype=float),
            np.asarray(doc["left"], dtype=np.int64),
            np.asarray(doc["right"], dtype=np.int64),
            np.asarray(doc["value"], dtype=float),
        )


def best_split(X: np.ndarray, r: np.ndarray, min_leaf: int):
    """Exact greedy variance-reduction split.

    Returns ``(gain, feature, threshold)`` or ``None``. Ties go to the lowest
    feature index, then the lowest threshold.
    """
    n = r.shape[0]
    if n < 2 * min_leaf:
        return None
    total = r.sum()
    base = total * total / n
    best = None
    lo, hi = min_leaf, n - min_leaf  # allowed left sizes
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cs = np.cumsum(r[order])
        # left block is xs[:k]; valid when xs[k-1] < xs[k]
        k = np.arange(lo, hi + 1)
        k = k[xs[k - 1] < xs[np.minimum(k, n - 1)]]
        if k.size == 0:
            continue
        sl = cs[k - 1]
        gain = sl * sl / k + (total - sl) ** 2 / (n - k) - base
        i = int(np.argmax(gain))
        g = float(gain[i])
        if g > 0 and (best is None or g > best[0]):
            kk = k[i]
            best = (g, f, 0.5 * (xs[kk - 1] + xs[kk]))
    return best


def fit_tree(X: np.ndarray, r: np.ndarray, max_depth: int, min_leaf: int) -> RegressionTree:
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(rows: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(r[rows].mean()))
        if depth >= max_depth:
            return node
        split = best_split(X[rows], r[rows], min_leaf)
        if split is None:
            return node
        _, f, thr = split
        mask = X[rows, f] <= thr
        feature[node] = f
        threshold[node] = thr
        left[node] = grow(rows[mask], depth + 1)
        right[node] = grow(rows[~mask], depth + 1)
        return node

    grow(np.arange(r.shape[0]), 0)
    return RegressionTree(
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=float),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=float),
    )


@dataclass(frozen=True, eq=False)
class GbtModel:
    column_names: tuple[str, ...]
    base_score: float
    learning_rate: float
    trees: tuple[RegressionTree, ...]
    params: GbtParams = field(default_factory=GbtParams)

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.full(X.shape[0], self.base_score)
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
        return out

    def staged_predict(self, X: np.ndarray):
        """Yield predictions after 0, 1, ..., len(trees) trees."""
        out = np.full(X.shape[0], self.base_score)
        yield out.copy()
        for t in self.trees:
            out += self.learning_rate * t.predict(X)
            yield out.copy()

    def to_dict(self) -> dict:
        return {
            "kind": "gbt",
            "column_names": list(self.column_names),
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "params": self.params.__dict__.copy(),
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "GbtModel":
        return cls(
            tuple(doc["column_names"]),
            float(doc["base_score"]),
            float(doc["learning_rate"]),
            tuple(RegressionTree.from_dict(t) for t in doc["trees"]),
            GbtParams(**doc["params"]),
        )


def fit_gbt(fm: FeatureMatrix, params: GbtParams = GbtParams()) -> GbtModel:
    n = fm.n
    if n < 2 * params.min_leaf:
        raise InputError(f"need at least {2 * params.min_leaf} rows, got {n}")
    rng = np.random.default_rng(params.seed)
    X, y = fm.X, fm.y
    base = float(y.mean())
    pred = np.full(n, base)
    m = max(1, int(round(params.subsample * n)))
    trees = []
    for _ in range(params.n_trees):
        resid = y - pred
        if m < n:
            rows = np.sort(rng.choice(n, size=m, replace=False))
            tree = fit_tree(X[rows], resid[rows], params.max_depth, params.min_leaf)
        else:
            tree = fit_tree(X, resid, params.max_depth, params.min_leaf)
            if tree.feature.shape[0] == 1:
                # full-sample residuals are mean-zero by construction; drop the rounding noise
                tree = RegressionTree(tree.feature, tree.threshold, tree.left, tree.right, np.zeros(1))
        trees.append(tree)
        pred = pred + params.learning_rate * tree.predict(X)
    return GbtModel(fm.column_names, base, params.learning_rate, tuple(trees), params)
