from __future__ import annotations

import numpy as np

from ..errors import NonFiniteLoss
from .base import Classifier, sigmoid


def logloss_and_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float):
    """Mean log-loss + (l2/2)|w|^2 and its gradient with respect to (w, b)."""
    z = X @ w + b
    loss = np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w)
    r = (sigmoid(z) - y) / len(y)
    return loss, X.T @ r + l2 * w, r.sum()


class LogisticRegression(Classifier):
    """L2-regularized logistic regression fit by full-batch gradient descent.

    Step size is 1/L for the Lipschitz bound L = |[X 1]|_2^2 / (4n) + l2,
    which makes every step a guaranteed descent step.
    """

    family = "logreg"

    def _fit(self, X, y):
        n, p = X.shape
        l2, tol = self.hp["l2"], self.hp["tol"]
        Xb = np.hstack([X, np.ones((n, 1))])
        lipschitz = np.linalg.norm(Xb, 2) ** 2 / (4.0 * n) + l2
        step = 1.0 / lipschitz
        w = np.zeros(p)
        b = 0.0
        self.n_iter = 0
        for it in range(self.hp["max_iter"]):
            loss, gw, gb = logloss_and_grad(w, b, X, y, l2)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"log-loss became {loss} at iteration {it}")
            if max(np.abs(gw).max(initial=0.0), abs(gb)) < tol:
                break
            w -= step * gw
            b -= step * gb
            self.n_iter = it + 1
        self.weights = w
        self.bias = float(b)

    def _proba(self, X):
        return sigmoid(X @ self.weights + self.bias)

    def raw_importance(self):
        return np.abs(self.weights)

    def to_arrays(self):
        return {"weights": self.weights, "bias": np.array(self.bias)}

    def load_arrays(self, arrays):
        self.weights = arrays["weights"]
        self.bias = float(arrays["bias"])
