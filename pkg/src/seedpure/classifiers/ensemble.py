"""Random forest and extremely randomized trees over binary labels."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import List

import numpy as np

from seedpure._backend import thread_count
from seedpure.classifiers.tree import Tree, _prep, grow_tree
from seedpure.errors import TrainingError


class _Forest:
    random_thresholds = False

    def __init__(self, n_trees=100, max_features="sqrt", seed=0, bootstrap=False):
        if n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        self.n_trees = int(n_trees)
        self.max_features = max_features
        self.seed = int(seed)
        self.bootstrap = bool(bootstrap)
        self.trees_: List[Tree] = []

    def hyperparameters(self) -> dict:
        return {"n_trees": self.n_trees, "max_features": self.max_features,
                "bootstrap": self.bootstrap, "seed": self.seed}

    def fit(self, X, y):
        X, y = _prep(X, y)
        n = X.shape[0]
        if n < 2:
            raise TrainingError(f"{self.algorithm} needs at least 2 training samples")
        # one independent stream per tree, so results do not depend on scheduling
        streams = np.random.SeedSequence(self.seed).spawn(self.n_trees)

        def build(ss):
            rng = np.random.default_rng(ss)
            rows = rng.integers(0, n, n) if self.bootstrap else None
            return grow_tree(X, y, rows, self.max_features, rng, self.random_thresholds)

        workers = min(thread_count(), self.n_trees)
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                self.trees_ = list(pool.map(build, streams))
        else:
            self.trees_ = [build(ss) for ss in streams]
        return self

    def votes(self, X) -> np.ndarray:
        """Number of trees voting for the positive class, per row."""
        X = np.ascontiguousarray(X, dtype=np.float32)
        total = np.zeros(X.shape[0], dtype=np.int64)
        for tree in self.trees_:
            total += tree.predict(X)
        return total

    def predict(self, X) -> np.ndarray:
        # majority vote; a tie goes to the positive class
        return (2 * self.votes(X) >= len(self.trees_)).astype(np.uint8)

    def get_parameters(self) -> dict:
        out = {}
        for i, tree in enumerate(self.trees_):
            for key, arr in tree.to_arrays().items():
                out[f"tree{i}.{key}"] = arr
        return out

    def set_parameters(self, params: dict):
        trees = []
        for i in range(self.n_trees):
            trees.append(Tree.from_arrays({k: params[f"tree{i}.{k}"] for k in
                                           ("feature", "threshold", "left", "right", "counts")}))
        self.trees_ = trees
        return self


class RandomForest(_Forest):
    """Bootstrap-resampled CART trees with sqrt(d) candidate features per node."""
    algorithm = "rf"

    def __init__(self, n_trees=100, bootstrap=True, max_features="sqrt", seed=0):
        super().__init__(n_trees, max_features, seed, bootstrap)


class ExtraTrees(_Forest):
    """Trees on the full training set, one random threshold per candidate feature."""
    algorithm = "et"
    random_thresholds = True

    def __init__(self, n_trees=100, max_features="sqrt", seed=0, bootstrap=False):
        super().__init__(n_trees, max_features, seed, bootstrap)
