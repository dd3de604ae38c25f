"""Dense 40-10-5-1 network: ReLU hidden layers, dropout after the first,
sigmoid output, mean-squared-error loss, Adam."""
from __future__ import annotations

import numpy as np

from ..errors import NonFiniteLoss
from ..preprocess import make_rng
from .base import Classifier, sigmoid


def init_params(n_in: int, hidden, rng: np.random.Generator) -> list[np.ndarray]:
    """Glorot-uniform weights, zero biases."""
    params = []
    sizes = [n_in, *hidden, 1]
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        params.append(np.zeros(fan_out))
    return params


def parameter_count(n_in: int, hidden=(40, 10, 5)) -> int:
    sizes = [n_in, *hidden, 1]
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def forward_backward(params, X, y, mask=None):
    """MSE loss and gradients. ``mask`` is the (already scaled) dropout mask on layer 1."""
    n_layers = len(params) // 2
    acts = [X]
    pre = []
    a = X
    for k in range(n_layers):
        z = a @ params[2 * k] + params[2 * k + 1]
        pre.append(z)
        if k == n_layers - 1:
            a = sigmoid(z)
        else:
            a = np.maximum(z, 0.0)
            if k == 0 and mask is not None:
                a = a * mask
        acts.append(a)
    out = acts[-1][:, 0]
    diff = out - y
    loss = np.mean(diff ** 2)

    grads = [None] * len(params)
    delta = (2.0 * diff / len(y) * out * (1.0 - out))[:, None]
    for k in range(n_layers - 1, -1, -1):
        grads[2 * k] = acts[k].T @ delta
        grads[2 * k + 1] = delta.sum(axis=0)
        if k > 0:
            delta = delta @ params[2 * k].T
            if k - 1 == 0 and mask is not None:
                delta = delta * mask
            delta = delta * (pre[k - 1] > 0)
    return loss, grads


def predict_params(params, X):
    a = X
    n_layers = len(params) // 2
    for k in range(n_layers):
        z = a @ params[2 * k] + params[2 * k + 1]
        a = sigmoid(z) if k == n_layers - 1 else np.maximum(z, 0.0)
    return a[:, 0]


class MLP(Classifier):
    family = "mlp"

    def _fit(self, X, y):
        hp = self.hp
        rng = make_rng(self.spec.seed, 0x4D4C50)
        params = init_params(X.shape[1], hp["hidden"], rng)
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
        b1, b2, eps, lr = hp["beta1"], hp["beta2"], hp["eps"], hp["lr"]
        keep = 1.0 - hp["dropout"]
        yf = y.astype(float)
        n = X.shape[0]
        step = 0
        self.history = []
        for _ in range(hp["epochs"]):
            perm = rng.permutation(n)
            epoch_loss = 0.0
            for lo in range(0, n, hp["batch_size"]):
                idx = perm[lo:lo + hp["batch_size"]]
                mask = (rng.random((len(idx), hp["hidden"][0])) < keep) / keep
                loss, grads = forward_backward(params, X[idx], yf[idx], mask)
                if not np.isfinite(loss):
                    raise NonFiniteLoss("MSE became non-finite during training")
                epoch_loss += loss * len(idx)
                step += 1
                for k, g in enumerate(grads):
                    m[k] = b1 * m[k] + (1 - b1) * g
                    v[k] = b2 * v[k] + (1 - b2) * g * g
                    mhat = m[k] / (1 - b1 ** step)
                    vhat = v[k] / (1 - b2 ** step)
                    params[k] = params[k] - lr * mhat / (np.sqrt(vhat) + eps)
            self.history.append(epoch_loss / n)
        self.params = params

    def _proba(self, X):
        return predict_params(self.params, X)

    def to_arrays(self):
        return {f"layer{k}": p for k, p in enumerate(self.params)}

    def load_arrays(self, arrays):
        self.params = [arrays[f"layer{k}"] for k in range(len(arrays))]
