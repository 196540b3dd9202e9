"""Six binary classifiers behind one fit/predict/serialize contract.

Model files are JSON documents::

    {
      "format": "seedpure-model", "version": 1,
      "algorithm": "lr", "n_features": 48384, "seed": 0,
      "hyperparameters": {...},
      "standardizer": null | {"mean": <array>, "std": <array>, "epsilon": 1e-08},
      "parameters": {"w": <array>, "b": <array>}
    }

where ``<array>`` is ``{"dtype": "<f8", "shape": [...], "base64": "..."}``
holding the raw little-endian bytes, so floats round-trip exactly.
"""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from seedpure.classifiers.ensemble import ExtraTrees, RandomForest
from seedpure.classifiers.knn import KNN, knn_predict
from seedpure.classifiers.linear import LinearSVM, LogisticRegression, lr_objective
from seedpure.classifiers.tree import DecisionTree, Tree, best_split, fit_tree, gini, grow_tree
from seedpure.errors import FormatError, LeakageError, ShapeError
from seedpure.features import FeatureMatrix, Standardizer, apply_standardizer, fit_standardizer

# column order used in report tables
ALGORITHMS = ("dt", "et", "rf", "knn", "lr", "svm")
SCALE_SENSITIVE = ("knn", "lr", "svm")
MODEL_FORMAT = "seedpure-model"
MODEL_VERSION = 1

_REGISTRY = {
    "dt": DecisionTree,
    "rf": RandomForest,
    "et": ExtraTrees,
    "knn": KNN,
    "lr": LogisticRegression,
    "svm": LinearSVM,
}

# user-facing names that differ from constructor arguments
_ALIASES = {"lambda": "lam"}
_SEEDED = ("dt", "rf", "et", "svm")


def make_estimator(algorithm: str, hyperparameters: Optional[dict] = None, seed: int = 0):
    if algorithm not in _REGISTRY:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {', '.join(ALGORITHMS)}")
    kwargs = {_ALIASES.get(k, k): v for k, v in (hyperparameters or {}).items()}
    if algorithm in _SEEDED:
        kwargs.setdefault("seed", seed)
    try:
        return _REGISTRY[algorithm](**kwargs)
    except TypeError as exc:
        raise ValueError(f"bad hyperparameters for {algorithm}: {exc}") from None


def default_standardize(algorithm: str) -> bool:
    return algorithm in SCALE_SENSITIVE


@dataclass
class TrainedClassifier:
    algorithm: str
    estimator: object
    n_features: int
    seed: int = 0
    standardizer: Optional[Standardizer] = None

    def _values(self, m) -> np.ndarray:
        values = m.values if isinstance(m, FeatureMatrix) else np.asarray(m, dtype=np.float32)
        if values.ndim != 2:
            raise ShapeError(f"expected a 2-D matrix, got shape {values.shape}")
        if values.shape[1] != self.n_features:
            raise ShapeError(f"model expects {self.n_features} features, got {values.shape[1]}")
        if self.standardizer is not None and values.shape[0]:
            values = apply_standardizer(self.standardizer, FeatureMatrix.build(values)).values
        return values

    def predict(self, m) -> np.ndarray:
        values = self._values(m)
        if values.shape[0] == 0:
            return np.zeros(0, dtype=np.uint8)
        return np.asarray(self.estimator.predict(values), dtype=np.uint8)

    def to_document(self) -> dict:
        std = None
        if self.standardizer is not None:
            std = {"mean": _enc(self.standardizer.mean), "std": _enc(self.standardizer.std),
                   "epsilon": self.standardizer.epsilon}
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "algorithm": self.algorithm,
            "n_features": self.n_features,
            "seed": self.seed,
            "hyperparameters": self.estimator.hyperparameters(),
            "standardizer": std,
            "parameters": {k: _enc(v) for k, v in self.estimator.get_parameters().items()},
        }

    @classmethod
    def from_document(cls, doc: dict) -> "TrainedClassifier":
        if doc.get("format") != MODEL_FORMAT:
            raise FormatError("not a seedpure model document")
        if doc.get("version") != MODEL_VERSION:
            raise FormatError(f"model version {doc.get('version')} unsupported")
        algo = doc["algorithm"]
        est = make_estimator(algo, doc["hyperparameters"])
        est.set_parameters({k: _dec(v) for k, v in doc["parameters"].items()})
        std = None
        if doc.get("standardizer"):
            s = doc["standardizer"]
            std = Standardizer(_dec(s["mean"]), _dec(s["std"]), float(s["epsilon"]))
        return cls(algo, est, int(doc["n_features"]), int(doc.get("seed", 0)), std)

    def dumps(self) -> str:
        return json.dumps(self.to_document(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def loads(cls, text: str) -> "TrainedClassifier":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise FormatError(f"model file is not valid JSON: {exc}") from None
        return cls.from_document(doc)


def _enc(arr) -> dict:
    arr = np.asarray(arr)
    if arr.dtype.kind == "f":
        arr = arr.astype("<f8") if arr.dtype.itemsize == 8 else arr.astype("<f4")
    elif arr.dtype.kind in "iu":
        arr = arr.astype("<i8") if arr.dtype.itemsize > 1 else arr.astype("u1")
    arr = np.ascontiguousarray(arr)
    return {"dtype": arr.dtype.str, "shape": list(arr.shape),
            "base64": base64.b64encode(arr.tobytes()).decode("ascii")}


def _dec(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["base64"])
    return np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).copy()


def train_classifier(algorithm: str, train: FeatureMatrix, hyperparameters: Optional[dict] = None,
                     seed: int = 0, standardize: Optional[bool] = None) -> TrainedClassifier:
    """Fit ``algorithm`` on training rows; ``standardize=None`` picks the default."""
    if train.role == "test":
        raise LeakageError("classifier fitted on test rows")
    if standardize is None:
        standardize = default_standardize(algorithm)
    std = fit_standardizer(train) if standardize else None
    fm = apply_standardizer(std, train) if std is not None else train
    est = make_estimator(algorithm, hyperparameters, seed)
    est.fit(fm.values, fm.labels)
    return TrainedClassifier(algorithm, est, train.n_features, seed, std)


def save_model(model: TrainedClassifier, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(model.dumps())


def load_model(path) -> TrainedClassifier:
    with open(path, encoding="utf-8") as fh:
        return TrainedClassifier.loads(fh.read())


__all__ = [
    "ALGORITHMS", "DecisionTree", "ExtraTrees", "KNN", "LinearSVM", "LogisticRegression",
    "RandomForest", "Tree", "TrainedClassifier", "best_split", "fit_tree", "gini", "grow_tree",
    "knn_predict", "load_model", "lr_objective", "make_estimator", "save_model",
    "train_classifier",
]
