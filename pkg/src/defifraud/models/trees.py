"""Random forest (Gini CART) and second-order gradient-boosted trees."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .base import Classifier, sigmoid


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    score: np.ndarray  # split gain (boosting) or weighted impurity decrease (forest)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return K.apply_tree(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]


_TREE_FIELDS = ("feature", "threshold", "left", "right", "value", "score")


def _pack(trees: list[Tree]) -> dict[str, np.ndarray]:
    sizes = np.array([len(t.feature) for t in trees], dtype=np.int64)
    out = {"tree_sizes": sizes}
    for name in _TREE_FIELDS:
        parts = [getattr(t, name) for t in trees]
        out[f"tree_{name}"] = np.concatenate(parts) if parts else np.zeros(0)
    return out


def _unpack(arrays: dict[str, np.ndarray]) -> list[Tree]:
    bounds = np.concatenate([[0], np.cumsum(arrays["tree_sizes"])])
    trees = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        cols = {name: arrays[f"tree_{name}"][lo:hi] for name in _TREE_FIELDS}
        for name in ("feature", "left", "right"):
            cols[name] = cols[name].astype(np.int64)
        trees.append(Tree(**cols))
    return trees


def _score_by_feature(trees: list[Tree], p: int) -> np.ndarray:
    total = np.zeros(p)
    for t in trees:
        split = t.feature >= 0
        np.add.at(total, t.feature[split], t.score[split])
    return total


class RandomForest(Classifier):
    """Bagged CART trees; probability is the fraction of trees voting malicious."""

    family = "random_forest"

    def _fit(self, X, y):
        n, p = X.shape
        XT = np.ascontiguousarray(X.T)
        mtry = max(1, int(math.sqrt(p)))
        ss = np.random.SeedSequence([self.spec.seed, 0x5F])
        self.trees = []
        for child in ss.spawn(self.hp["n_trees"]):
            rng = np.random.Generator(np.random.Philox(child))
            rows = rng.integers(0, n, size=n)
            tree_seed = int(rng.integers(0, 2 ** 31 - 1))
            parts = K.build_gini_tree(XT, y, rows, mtry, self.hp["max_depth"], self.hp["min_leaf"], tree_seed)
            self.trees.append(Tree(*parts))

    def _proba(self, X):
        votes = np.zeros(X.shape[0])
        for t in self.trees:
            votes += t.predict(X) >= 0.5
        return votes / len(self.trees)

    def raw_importance(self):
        return _score_by_feature(self.trees, self.feature_count) / len(self.trees)

    def to_arrays(self):
        return _pack(self.trees)

    def load_arrays(self, arrays):
        self.trees = _unpack(arrays)


class GradientBoostedTrees(Classifier):
    """Newton boosting on logistic loss with exact greedy splits.

    Leaf weight -G/(H + lambda) scaled by eta; split gain
    0.5 * (GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)) - gamma. The model starts
    from the training prior log-odds.
    """

    family = "gbt"

    def _fit(self, X, y):
        hp = self.hp
        prior = y.mean()
        self.base_score = float(np.log(prior / (1.0 - prior)))
        XT = np.ascontiguousarray(X.T)
        order = np.argsort(XT, axis=1, kind="stable").astype(np.int32)
        sorted_vals = np.take_along_axis(XT, order, axis=1)
        work_ord = np.empty((2, *order.shape), dtype=np.int32)
        work_val = np.empty((2, *order.shape))
        margin = np.full(X.shape[0], self.base_score)
        yf = y.astype(float)
        self.trees = []
        for _ in range(hp["n_rounds"]):
            prob = sigmoid(margin)
            g = prob - yf
            h = prob * (1.0 - prob)
            *parts, leaf_of = K.build_boosted_tree(
                XT, order, sorted_vals, g, h, hp["max_depth"], hp["reg_lambda"], hp["gamma"],
                hp["min_child_weight"], hp["eta"], work_ord, work_val)
            tree = Tree(*parts)
            self.trees.append(tree)
            margin = margin + tree.value[leaf_of]

    def decision_function(self, X):
        X = self._check(X)
        margin = np.full(X.shape[0], self.base_score)
        for t in self.trees:
            margin += t.predict(X)
        return margin

    def _proba(self, X):
        return sigmoid(self.decision_function(X))

    def raw_importance(self):
        return _score_by_feature(self.trees, self.feature_count)

    def to_arrays(self):
        return {**_pack(self.trees), "base_score": np.array(self.base_score)}

    def load_arrays(self, arrays):
        self.trees = _unpack(arrays)
        self.base_score = float(arrays["base_score"])
