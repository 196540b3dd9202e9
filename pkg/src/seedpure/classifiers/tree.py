"""CART trees grown to purity with Gini impurity.

Trees are stored as flat arrays (node 0 is the root). Internal nodes send
``x[feature] <= threshold`` left and everything else right.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from seedpure._backend import kernels
from seedpure.errors import TrainingError


def gini(counts) -> float:
    c0, c1 = counts
    n = c0 + c1
    if n <= 0:
        raise ValueError("gini of an empty node")
    p0, p1 = c0 / n, c1 / n
    return 1.0 - p0 * p0 - p1 * p1


def _decrease(score: float, c0: int, c1: int) -> float:
    # parent gini minus size-weighted child gini, from the kernel's score
    m = c0 + c1
    return score / m - (c0 * c0 + c1 * c1) / (m * m)


def _prep(X, y):
    X = np.ascontiguousarray(X, dtype=np.float32)
    y = np.ascontiguousarray(y, dtype=np.uint8)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError(f"expected X (n, d) and y (n,), got {X.shape} and {y.shape}")
    return X, y


def best_split(X, y, candidate_features=None):
    """Exhaustive midpoint scan; returns (feature, threshold, decrease) or None.

    Ties go to the lower feature index, then the lower threshold.
    """
    X, y = _prep(X, y)
    c1 = int(y.sum())
    c0 = len(y) - c1
    if len(y) < 2 or c0 == 0 or c1 == 0:
        raise ValueError("best_split needs at least two rows with mixed labels")
    if candidate_features is None:
        cand = np.arange(X.shape[1], dtype=np.intp)
    else:
        cand = np.sort(np.asarray(candidate_features, dtype=np.intp))
    rows = np.arange(X.shape[0], dtype=np.intp)
    f, t, s, _, _ = kernels.split_node(X, y, rows, cand, None, len(cand))
    if f < 0:
        return None
    return int(f), float(t), _decrease(s, c0, c1)


class TreeNode(NamedTuple):
    """Read-only view of one node."""
    index: int
    is_leaf: bool
    label: int
    counts: tuple
    feature: int
    threshold: float
    left: int
    right: int


@dataclass
class Tree:
    feature: np.ndarray    # intp, -1 for leaves
    threshold: np.ndarray  # float64
    left: np.ndarray       # intp
    right: np.ndarray      # intp
    counts: np.ndarray     # int64 (n_nodes, 2)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def labels(self) -> np.ndarray:
        # leaf majority, ties to the positive class
        return (self.counts[:, 1] >= self.counts[:, 0]).astype(np.uint8)

    def node(self, i: int) -> TreeNode:
        leaf = self.feature[i] < 0
        return TreeNode(i, bool(leaf), int(self.labels[i]), tuple(int(c) for c in self.counts[i]),
                        int(self.feature[i]), float(self.threshold[i]),
                        int(self.left[i]), int(self.right[i]))

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.intp)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float32)
        return kernels.tree_apply(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X) -> np.ndarray:
        return self.labels[self.apply(X)]

    def to_arrays(self) -> dict:
        return {"feature": self.feature, "threshold": self.threshold, "left": self.left,
                "right": self.right, "counts": self.counts}

    @classmethod
    def from_arrays(cls, d: dict) -> "Tree":
        return cls(np.ascontiguousarray(d["feature"], dtype=np.intp),
                   np.ascontiguousarray(d["threshold"], dtype=np.float64),
                   np.ascontiguousarray(d["left"], dtype=np.intp),
                   np.ascontiguousarray(d["right"], dtype=np.intp),
                   np.ascontiguousarray(d["counts"], dtype=np.int64))


def resolve_max_features(max_features: Union[str, int, None], n_features: int) -> int:
    if max_features is None or max_features == "all":
        return n_features
    if max_features == "sqrt":
        return max(1, math.isqrt(n_features))
    if isinstance(max_features, (int, np.integer)) and max_features >= 1:
        return min(int(max_features), n_features)
    raise ValueError(f"invalid max_features {max_features!r}")


def _better(a, b):
    """Is split ``a`` preferred over ``b``? Each is (feature, threshold, score)."""
    if a[0] < 0:
        return False
    if b[0] < 0:
        return True
    return a[2] > b[2] or (a[2] == b[2] and a[0] < b[0])


def _find_split(X, y, rows, n_features, quota, rng, random_thresholds, all_features):
    if quota >= n_features and not random_thresholds:
        f, t, s, _, _ = kernels.split_node(X, y, rows, all_features, None, n_features)
        return f, t, s
    first = rng.choice(n_features, size=quota, replace=False).astype(np.intp)
    u = rng.random(quota) if random_thresholds else None
    f, t, s, _, found = kernels.split_node(X, y, rows, first, u, quota)
    best = (f, t, s)
    if found < quota and quota < n_features:
        # every drawn feature was constant here; keep drawing from the rest
        rest = np.setdiff1d(all_features, first, assume_unique=True)
        rest = rng.permutation(rest).astype(np.intp)
        u = rng.random(rest.shape[0]) if random_thresholds else None
        f, t, s, _, _ = kernels.split_node(X, y, rows, rest, u, quota - found)
        if _better((f, t, s), best):
            best = (f, t, s)
    return best


def grow_tree(X, y, rows=None, max_features=None, rng: Optional[np.random.Generator] = None,
              random_thresholds: bool = False) -> Tree:
    """Grow a tree on ``X[rows]`` (rows may repeat) until every leaf is pure
    or cannot be split.

    ``max_features`` non-constant features are examined per node, drawn at
    random from ``rng``; with ``random_thresholds`` each gets one uniform
    threshold instead of the exhaustive scan (extra-trees).
    """
    X, y = _prep(X, y)
    n, d = X.shape
    if n == 0:
        raise TrainingError("cannot fit a tree on an empty training set")
    rows = np.arange(n, dtype=np.intp) if rows is None else np.asarray(rows, dtype=np.intp)
    quota = resolve_max_features(max_features, d)
    if (quota < d or random_thresholds) and rng is None:
        raise ValueError("a random generator is required for feature subsampling")
    all_features = np.arange(d, dtype=np.intp)

    feature, threshold, left, right, counts = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append((0, 0))
        return len(feature) - 1

    stack = [(new_node(), rows)]
    while stack:
        nid, r = stack.pop()
        c1 = int(y[r].sum())
        c0 = r.shape[0] - c1
        counts[nid] = (c0, c1)
        if c0 == 0 or c1 == 0:
            continue
        f, t, _ = _find_split(X, y, r, d, quota, rng, random_thresholds, all_features)
        if f < 0:
            continue
        go_left = X[r, f].astype(np.float64) <= t
        lid, rid = new_node(), new_node()
        feature[nid], threshold[nid], left[nid], right[nid] = f, t, lid, rid
        stack.append((rid, r[~go_left]))
        stack.append((lid, r[go_left]))

    return Tree(np.asarray(feature, dtype=np.intp), np.asarray(threshold, dtype=np.float64),
                np.asarray(left, dtype=np.intp), np.asarray(right, dtype=np.intp),
                np.asarray(counts, dtype=np.int64).reshape(-1, 2))


def fit_tree(X, y, max_features="all", rng=None) -> Tree:
    return grow_tree(X, y, None, max_features, rng)


class DecisionTree:
    algorithm = "dt"

    def __init__(self, max_features="all", seed=0):
        self.max_features = max_features
        self.seed = seed
        self.tree_: Optional[Tree] = None

    def hyperparameters(self) -> dict:
        return {"max_features": self.max_features, "seed": self.seed}

    def fit(self, X, y):
        rng = np.random.default_rng(self.seed)
        self.tree_ = grow_tree(X, y, None, self.max_features, rng)
        return self

    def predict(self, X) -> np.ndarray:
        return self.tree_.predict(X)

    def get_parameters(self) -> dict:
        return self.tree_.to_arrays()

    def set_parameters(self, params: dict):
        self.tree_ = Tree.from_arrays(params)
        return self
