from __future__ import annotations

import numpy as np

from . import _kernels as K
from .base import Classifier, sigmoid


def _platt_objective(f, t, A, B):
    z = f * A + B
    return np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-np.abs(z))),
                           (t - 1) * z + np.log1p(np.exp(-np.abs(z)))))


def platt_scale(f: np.ndarray, y: np.ndarray, max_iter: int = 100) -> tuple[float, float]:
    """Fit P(y=1|f) = 1 / (1 + exp(A f + B)) by Newton's method with backtracking.

    Uses the regularized targets of Platt (1999) in the numerically safe
    form of Lin, Lin & Weng (2007).
    """
    n_pos = int((y == 1).sum())
    n_neg = len(y) - n_pos
    hi, lo = (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0)
    t = np.where(y == 1, hi, lo)
    A, B = 0.0, float(np.log((n_neg + 1.0) / (n_pos + 1.0)))
    fval = _platt_objective(f, t, A, B)
    for _ in range(max_iter):
        z = f * A + B
        p = sigmoid(-z)  # = 1 / (1 + exp(z))
        d2 = p * (1.0 - p)
        h11 = np.sum(f * f * d2) + 1e-12
        h22 = np.sum(d2) + 1e-12
        h21 = np.sum(f * d2)
        d1 = t - p
        g1, g2 = np.sum(f * d1), np.sum(d1)
        if abs(g1) < 1e-5 and abs(g2) < 1e-5:
            break
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * dA + g2 * dB
        step = 1.0
        while step >= 1e-10:
            nA, nB = A + step * dA, B + step * dB
            nf = _platt_objective(f, t, nA, nB)
            if nf < fval + 1e-4 * step * gd:
                A, B, fval = nA, nB, nf
                break
            step /= 2.0
        else:
            break
    return float(A), float(B)


class RbfSVM(Classifier):
    """Soft-margin SVM, RBF kernel, solved by SMO; probabilities from a Platt link."""

    family = "svm_rbf"

    def _fit(self, X, y):
        hp = self.hp
        self.gamma = float(hp["gamma"]) if hp["gamma"] is not None else 1.0 / X.shape[1]
        ys = np.where(y == 1, 1.0, -1.0)
        alpha, rho, n_iter = K.smo_solve(X, ys, float(hp["C"]), self.gamma, float(hp["tol"]),
                                         int(hp["max_iter"]), int(hp["cache_rows"]))
        self.n_iter = int(n_iter)
        self.alpha = alpha
        sv = alpha > 0
        self.support = np.flatnonzero(sv)
        self.support_vectors = X[sv].copy()
        self.dual_coef = alpha[sv] * ys[sv]
        self.rho = float(rho)
        self.platt = platt_scale(self.decision_function(X), y)

    def decision_function(self, X):
        X = np.ascontiguousarray(self._check(X))
        return K.rbf_decision(X, self.support_vectors, self.dual_coef, self.gamma, self.rho)

    def _proba(self, X):
        A, B = self.platt
        return sigmoid(-(A * self.decision_function(X) + B))

    def to_arrays(self):
        return {"support_vectors": self.support_vectors, "dual_coef": self.dual_coef,
                "rho": np.array(self.rho), "gamma": np.array(self.gamma),
                "platt": np.array(self.platt)}

    def load_arrays(self, arrays):
        self.support_vectors = arrays["support_vectors"]
        self.dual_coef = arrays["dual_coef"]
        self.rho = float(arrays["rho"])
        self.gamma = float(arrays["gamma"])
        self.platt = tuple(float(v) for v in arrays["platt"])
