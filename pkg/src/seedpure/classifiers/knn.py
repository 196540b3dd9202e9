"""k-nearest-neighbour voting under Euclidean distance."""
import numpy as np

from seedpure._backend import kernels
from seedpure.errors import TrainingError


def knn_predict(train_X, train_y, query, k=5) -> np.ndarray:
    """Majority label among the k nearest training rows.

    Equal distances rank the lower training index first. A split vote goes
    to the label whose neighbours have the smaller summed distance, and to
    label 1 if that also ties.
    """
    train_X = np.ascontiguousarray(train_X, dtype=np.float32)
    train_y = np.asarray(train_y, dtype=np.uint8)
    query = np.ascontiguousarray(query, dtype=np.float32)
    n = train_X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} training rows")
    if query.shape[0] == 0:
        return np.zeros(0, dtype=np.uint8)
    d2 = kernels.sq_distances(query, train_X)
    out = np.empty(query.shape[0], dtype=np.uint8)
    for i in range(query.shape[0]):
        nearest = np.argsort(d2[i], kind="stable")[:k]
        labels = train_y[nearest]
        ones = int(labels.sum())
        zeros = k - ones
        if ones != zeros:
            out[i] = ones > zeros
            continue
        dist = np.sqrt(d2[i, nearest])
        d1 = dist[labels == 1].sum()
        d0 = dist[labels == 0].sum()
        out[i] = 0 if d0 < d1 else 1
    return out


class KNN:
    algorithm = "knn"

    def __init__(self, k=5):
        self.k = int(k)
        self.X_ = None
        self.y_ = None

    def hyperparameters(self) -> dict:
        return {"k": self.k}

    def fit(self, X, y):
        X = np.ascontiguousarray(X, dtype=np.float32)
        if not 1 <= self.k <= X.shape[0]:
            raise TrainingError(f"k={self.k} out of range for {X.shape[0]} training rows")
        self.X_ = X
        self.y_ = np.ascontiguousarray(y, dtype=np.uint8)
        return self

    def predict(self, X) -> np.ndarray:
        return knn_predict(self.X_, self.y_, X, self.k)

    def get_parameters(self) -> dict:
        return {"X": self.X_, "y": self.y_}

    def set_parameters(self, params: dict):
        self.X_ = np.ascontiguousarray(params["X"], dtype=np.float32)
        self.y_ = np.ascontiguousarray(params["y"], dtype=np.uint8)
        return self
