"""Random forest classifier with Gini splits and Gini (mean decrease in impurity) importance.

Classes are integers: 0 = safe, 1 = risky. Ties, both inside a leaf and in the
forest vote, resolve to risky.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SAFE, RISKY = 0, 1
LABELS = ("safe", "risky")


class TrainingError(ValueError):
    pass


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 5
    max_features: int | None = None  # None -> ceil(sqrt(n_features))

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 0 or self.min_leaf < 1:
            raise ValueError(f"invalid forest parameters {self}")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")

    def features_per_split(self, n_features: int) -> int:
        k = self.max_features if self.max_features is not None else math.ceil(math.sqrt(n_features))
        return min(k, n_features)


@dataclass
class Node:
    counts: tuple[int, int]
    feature: int = -1
    threshold: float = 0.0
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"counts": list(self.counts)}
        return {
            "counts": list(self.counts),
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Node":
        if "feature" not in d:
            return cls(tuple(d["counts"]))
        return cls(
            tuple(d["counts"]), d["feature"], d["threshold"],
            cls.from_dict(d["left"]), cls.from_dict(d["right"]),
        )


def _gini(n0, n1):
    n = n0 + n1
    with np.errstate(invalid="ignore", divide="ignore"):
        p0, p1 = n0 / n, n1 / n
    return 1.0 - p0 * p0 - p1 * p1


def _best_split(x: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best threshold on one feature column.

    Returns (weighted child impurity, threshold) or None when no split leaves
    at least ``min_leaf`` samples on both sides of a value change.
    """
    n = len(y)
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    # candidate cut after position k means left = xs[:k+1]
    left_n = np.arange(1, n)
    left_1 = np.cumsum(ys)[:-1]
    left_0 = left_n - left_1
    right_n = n - left_n
    right_1 = ys.sum() - left_1
    right_0 = right_n - right_1
    valid = (xs[1:] > xs[:-1]) & (left_n >= min_leaf) & (right_n >= min_leaf)
    if not valid.any():
        return None
    child = (left_n * _gini(left_0, left_1) + right_n * _gini(right_0, right_1)) / n
    child = np.where(valid, child, np.inf)
    k = int(np.argmin(child))
    return float(child[k]), (float(xs[k]) + float(xs[k + 1])) / 2.0


class DecisionTree:
    def __init__(self, params: ForestParams, n_features: int):
        self.params = params
        self.n_features = n_features
        self.root: Node | None = None
        # sum over splits of (node samples / root samples) * impurity decrease
        self.importance_raw = np.zeros(n_features)

    def fit(self, X: np.ndarray, y: np.ndarray, rng: np.random.Generator) -> "DecisionTree":
        self._n_root = len(y)
        self._rng = rng
        self._k = self.params.features_per_split(self.n_features)
        self.root = self._grow(X, y, 0)
        del self._rng
        return self

    def _grow(self, X: np.ndarray, y: np.ndarray, depth: int) -> Node:
        n1 = int(y.sum())
        n = len(y)
        node = Node((n - n1, n1))
        if depth >= self.params.max_depth or n1 == 0 or n1 == n or n < 2 * self.params.min_leaf:
            return node
        parent = float(_gini(n - n1, n1))
        features = self._rng.choice(self.n_features, size=self._k, replace=False)
        best = None
        for f in sorted(int(f) for f in features):
            found = _best_split(X[:, f], y, self.params.min_leaf)
            if found is not None and (best is None or found[0] < best[0]):
                best = (found[0], found[1], f)
        if best is None or parent - best[0] <= 1e-12:
            return node
        child_impurity, threshold, f = best
        mask = X[:, f] <= threshold
        self.importance_raw[f] += (n / self._n_root) * (parent - child_impurity)
        node.feature, node.threshold = f, threshold
        node.left = self._grow(X[mask], y[mask], depth + 1)
        node.right = self._grow(X[~mask], y[~mask], depth + 1)
        return node

    def leaf(self, x: np.ndarray) -> Node:
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node

    def vote(self, x: np.ndarray) -> int:
        n0, n1 = self.leaf(x).counts
        return RISKY if n1 >= n0 else SAFE

    def n_splits(self) -> int:
        def count(node):
            return 0 if node.is_leaf else 1 + count(node.left) + count(node.right)
        return count(self.root)


@dataclass
class ForestModel:
    params: ForestParams
    seed: int
    n_features: int
    trees: list[DecisionTree] = field(default_factory=list)
    feature_names: list[str] | None = None

    def votes(self, x) -> tuple[int, int]:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_features,):
            raise ShapeError(f"expected {self.n_features} features, got shape {x.shape}")
        risky = sum(t.vote(x) for t in self.trees)
        return len(self.trees) - risky, risky

    def predict_label(self, x) -> int:
        safe, risky = self.votes(x)
        return RISKY if risky >= safe else SAFE

    def predict_many(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ShapeError(f"expected a 2-d feature matrix, got shape {X.shape}")
        return np.array([self.predict_label(x) for x in X], dtype=int)

    @property
    def importances(self) -> np.ndarray:
        raw = np.mean([t.importance_raw for t in self.trees], axis=0)
        total = raw.sum()
        return raw / total if total > 0 else raw

    def to_dict(self) -> dict:
        return {
            "params": {
                "n_trees": self.params.n_trees,
                "max_depth": self.params.max_depth,
                "min_leaf": self.params.min_leaf,
                "max_features": self.params.max_features,
            },
            "seed": self.seed,
            "n_features": self.n_features,
            "feature_names": self.feature_names,
            "trees": [
                {"root": t.root.to_dict(), "importance_raw": t.importance_raw.tolist()} for t in self.trees
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForestModel":
        params = ForestParams(**d["params"])
        model = cls(params, d["seed"], d["n_features"], feature_names=d.get("feature_names"))
        for td in d["trees"]:
            tree = DecisionTree(params, model.n_features)
            tree.root = Node.from_dict(td["root"])
            tree.importance_raw = np.asarray(td["importance_raw"], dtype=float)
            model.trees.append(tree)
        return model


def canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row permutation sorting samples lexicographically by (features, label)."""
    # lexsort treats its last key as primary
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def train_forest(X, y, params: ForestParams = ForestParams(), seed: int = 0, feature_names=None) -> ForestModel:
    """Fit ``params.n_trees`` trees, each on a bootstrap resample of the data.

    Samples are first put in a canonical order so the fitted model depends on
    the sample set, not on the order it was supplied in. Tree ``i`` draws all
    its randomness from a generator seeded with ``(seed, i)``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or len(X) != len(y):
        raise ShapeError(f"X must be (n, d) matching y; got {X.shape} and {y.shape}")
    if not np.isin(y, (SAFE, RISKY)).all():
        raise TrainingError("labels must be 0 (safe) or 1 (risky)")
    if len(np.unique(y)) < 2:
        raise TrainingError("training data must contain both safe and risky samples")
    order = canonical_order(X, y)
    X, y = X[order], y[order]
    n, d = X.shape
    model = ForestModel(params, seed, d, feature_names=list(feature_names) if feature_names is not None else None)
    for i in range(params.n_trees):
        rng = np.random.default_rng([seed, i])
        idx = rng.integers(0, n, size=n)
        model.trees.append(DecisionTree(params, d).fit(X[idx], y[idx], rng))
    return model


def predict(model: ForestModel, x) -> str:
    return LABELS[model.predict_label(x)]


def feature_importance(model: ForestModel, top_k: int = 5) -> dict:
    """Normalized importances plus the ``top_k`` ranking (ties by feature index)."""
    imp = model.importances
    names = model.feature_names or [f"f{i}" for i in range(model.n_features)]
    ranked = sorted(range(len(imp)), key=lambda i: (-imp[i], i))[:top_k]
    return {
        "importances": {names[i]: float(imp[i]) for i in range(len(imp))},
        "top": [{"rank": r + 1, "feature": names[i], "index": i, "importance": float(imp[i])} for r, i in enumerate(ranked)],
    }
