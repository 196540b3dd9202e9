"""Logistic regression (gradient descent) and linear SVM (dual coordinate descent)."""
from __future__ import annotations

import numpy as np
from scipy.special import expit

from seedpure._backend import kernels
from seedpure.errors import TrainingError


def lr_objective(w, b, X, y, lam):
    """Mean log-loss plus (lam/2)|w|^2, with its gradient in (w, b)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = X @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * lam * (w @ w))
    r = expit(z) - y
    grad_w = X.T @ r / X.shape[0] + lam * w
    grad_b = float(r.mean())
    return loss, grad_w, grad_b


class LogisticRegression:
    """Full-batch gradient descent from zero.

    The ridge term is applied as an implicit (proximal) step, which keeps
    the iteration stable for any penalty strength. The stationary point is
    the same as plain gradient descent's.
    """
    algorithm = "lr"

    def __init__(self, lam=1e-4, lr=0.1, max_iters=500, tol=1e-6):
        if lam < 0:
            raise ValueError("lambda must be >= 0")
        self.lam = float(lam)
        self.lr = float(lr)
        self.max_iters = int(max_iters)
        self.tol = float(tol)
        self.w = None
        self.b = 0.0
        self.n_iter_ = 0

    def hyperparameters(self) -> dict:
        return {"lambda": self.lam, "lr": self.lr, "max_iters": self.max_iters, "tol": self.tol}

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.shape[0] < 2:
            raise TrainingError("logistic regression needs at least 2 samples")
        w = np.zeros(X.shape[1])
        b = 0.0
        it = 0
        for it in range(self.max_iters):
            loss, gw, gb = lr_objective(w, b, X, y, self.lam)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at iteration {it}; lower the learning rate")
            if max(np.abs(gw).max(initial=0.0), abs(gb)) < self.tol:
                break
            w = (w - self.lr * (gw - self.lam * w)) / (1.0 + self.lr * self.lam)
            b -= self.lr * gb
        self.w, self.b, self.n_iter_ = w, float(b), it
        return self

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.w + self.b

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        # probability 0.5 exactly goes to the positive class
        return (self.decision_function(X) >= 0).astype(np.uint8)

    def get_parameters(self) -> dict:
        return {"w": self.w, "b": np.array([self.b])}

    def set_parameters(self, params: dict):
        self.w = np.asarray(params["w"], dtype=np.float64)
        self.b = float(np.asarray(params["b"]).reshape(-1)[0])
        return self


def _kkt_violation(X, ys, alpha, w, C) -> float:
    """Largest absolute projected dual gradient; zero exactly at the optimum."""
    g = ys * (X.astype(np.float64) @ w[:-1] + w[-1]) - 1.0
    pg = np.where(alpha <= 0.0, np.minimum(g, 0.0), np.where(alpha >= C, np.maximum(g, 0.0), g))
    return float(np.abs(pg).max(initial=0.0))


class LinearSVM:
    """L2-regularized hinge-loss SVM solved in the dual, one multiplier at a time.

    The bias is learned as the weight of a constant feature 1, so it is
    regularized along with w.
    """
    algorithm = "svm"

    def __init__(self, C=1.0, max_epochs=100, tol=1e-4, seed=0):
        if C <= 0:
            raise ValueError("C must be > 0")
        self.C = float(C)
        self.max_epochs = int(max_epochs)
        self.tol = float(tol)
        self.seed = int(seed)
        self.w = None
        self.b = 0.0
        self.alpha_ = None
        self.n_epochs_ = 0
        self.kkt_violation_ = None

    def hyperparameters(self) -> dict:
        return {"C": self.C, "max_epochs": self.max_epochs, "tol": self.tol, "seed": self.seed}

    def fit(self, X, y):
        X = np.ascontiguousarray(X, dtype=np.float32)
        y = np.asarray(y)
        if X.shape[0] < 2 or len(np.unique(y)) < 2:
            raise TrainingError("SVM training needs samples from both classes")
        ys = np.where(y == 1, 1.0, -1.0)
        n, d = X.shape
        qdiag = np.einsum("ij,ij->i", X.astype(np.float64), X.astype(np.float64)) + 1.0
        alpha = np.zeros(n)
        w = np.zeros(d + 1)
        rng = np.random.default_rng(self.seed)
        epoch = 0
        for epoch in range(1, self.max_epochs + 1):
            order = rng.permutation(n).astype(np.intp)
            worst = kernels.svm_epoch(X, ys, qdiag, alpha, w, order, self.C)
            # later updates in a sweep move earlier gradients; confirm on the final iterate
            if worst < self.tol and _kkt_violation(X, ys, alpha, w, self.C) < self.tol:
                break
        self.w, self.b = w[:d].copy(), float(w[d])
        self.alpha_, self.n_epochs_ = alpha, epoch
        self.kkt_violation_ = _kkt_violation(X, ys, alpha, w, self.C)
        return self

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.w + self.b

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0).astype(np.uint8)

    def primal_objective(self, X, y) -> float:
        ys = np.where(np.asarray(y) == 1, 1.0, -1.0)
        margins = ys * self.decision_function(X)
        return float(0.5 * (self.w @ self.w + self.b * self.b)
                     + self.C * np.maximum(0.0, 1.0 - margins).sum())

    def get_parameters(self) -> dict:
        return {"w": self.w, "b": np.array([self.b])}

    def set_parameters(self, params: dict):
        self.w = np.asarray(params["w"], dtype=np.float64)
        self.b = float(np.asarray(params["b"]).reshape(-1)[0])
        return self
