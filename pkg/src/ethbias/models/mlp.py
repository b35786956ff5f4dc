"""Feed-forward binary classifier trained with Adam.

ReLU hidden layers with inverted dropout, a sigmoid output unit, and
binary cross-entropy plus an L2 penalty on the weight matrices
(``l2 * sum(W**2)``, biases unpenalized).
"""
from __future__ import annotations

import numpy as np

from ..dataset import LabeledDataset
from .base import MlpParams, TrainedModel, check_train


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def init_weights(sizes, rng):
    """He-normal for ReLU layers, Glorot-normal for the output layer; zero biases."""
    params = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = i == len(sizes) - 2
        scale = np.sqrt(2.0 / (a + b)) if last else np.sqrt(2.0 / a)
        params.append(rng.normal(0.0, scale, size=(a, b)))
        params.append(np.zeros(b))
    return params


def forward(params, X, masks=None):
    """Return (logits, cache). ``masks`` holds one inverted-dropout mask per hidden layer."""
    h = X
    cache = []
    n_layers = len(params) // 2
    for i in range(n_layers):
        W, b = params[2 * i], params[2 * i + 1]
        z = h @ W + b
        if i == n_layers - 1:
            cache.append((h, None, None))
            return z[:, 0], cache
        a = np.maximum(z, 0.0)
        m = masks[i] if masks is not None else None
        if m is not None:
            a = a * m
        cache.append((h, z, m))
        h = a
    raise ValueError("network has no layers")


def loss_and_grad(params, X, y, l2=0.0, masks=None):
    """Mean BCE + l2 * sum of squared weights, and its gradient w.r.t. every parameter."""
    logits, cache = forward(params, X, masks)
    n = len(y)
    data_loss = float(np.mean(np.logaddexp(0.0, logits) - y * logits))
    reg = l2 * sum(float(np.sum(params[2 * i] ** 2)) for i in range(len(params) // 2))
    grads = [None] * len(params)
    delta = ((_sigmoid(logits) - y) / n)[:, None]
    for i in reversed(range(len(params) // 2)):
        h, z, m = cache[i]
        if z is not None:
            # back through dropout and ReLU of this layer's output
            delta = delta * (z > 0)
            if m is not None:
                delta = delta * m
        W = params[2 * i]
        grads[2 * i] = h.T @ delta + 2.0 * l2 * W
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ W.T
    return data_loss + reg, grads


class MlpModel(TrainedModel):
    kind = "nn"

    def __init__(self, params: MlpParams, feature_count, weights, mean, std, meta=None):
        super().__init__(params, feature_count, meta)
        self.weights = weights
        self.mean = np.asarray(mean, dtype=float)
        self.std = np.asarray(std, dtype=float)

    def _scale(self, X):
        return (X - self.mean) / self.std

    def decision_score(self, X):
        logits, _ = forward(self.weights, self._scale(X))
        return _sigmoid(logits)

    def state(self):
        return {
            "mean": [float(v) for v in self.mean],
            "std": [float(v) for v in self.std],
            "weights": [{"shape": list(w.shape), "data": [float(v) for v in w.ravel()]} for w in self.weights],
        }

    @classmethod
    def from_state(cls, params, feature_count, state, meta):
        ws = [np.array(w["data"], dtype=float).reshape(w["shape"]) for w in state["weights"]]
        return cls(params, feature_count, ws, state["mean"], state["std"], meta)


def fit_mlp(train: LabeledDataset, params: MlpParams = MlpParams()) -> MlpModel:
    check_train(train)
    X = np.asarray(train.X, dtype=float)
    y = train.y.astype(float)
    n, d = X.shape
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    Xs = (X - mean) / std

    rng = np.random.default_rng(params.seed)
    sizes = [d, *params.hidden_layers, 1]
    w = init_weights(sizes, rng)
    m1 = [np.zeros_like(p) for p in w]
    m2 = [np.zeros_like(p) for p in w]
    keep = 1.0 - params.dropout
    step = 0
    history = []
    for epoch in range(params.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, params.batch_size):
            idx = order[start:start + params.batch_size]
            xb, yb = Xs[idx], y[idx]
            masks = None
            if params.dropout > 0:
                masks = [(rng.random((len(idx), h)) < keep) / keep for h in params.hidden_layers]
            loss, grads = loss_and_grad(w, xb, yb, params.l2, masks)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss {loss} at epoch {epoch}, step {step}")
            step += 1
            b1t = 1.0 - params.beta1 ** step
            b2t = 1.0 - params.beta2 ** step
            for k, g in enumerate(grads):
                m1[k] = params.beta1 * m1[k] + (1.0 - params.beta1) * g
                m2[k] = params.beta2 * m2[k] + (1.0 - params.beta2) * g * g
                w[k] = w[k] - params.learning_rate * (m1[k] / b1t) / (np.sqrt(m2[k] / b2t) + params.eps)
            total += loss * len(idx)
        history.append(total / n)
    meta = {"seed": params.seed, "train_size": n, "loss_history": history}
    return MlpModel(params, d, w, mean, std, meta)
