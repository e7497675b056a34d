"""Multinomial logistic regression used as the gradient source for FGSM."""

from __future__ import annotations

import numpy as np

from ..errors import BadLabel, WidthMismatch
from .base import Classifier, check_training_data, frozen


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class SoftmaxSurrogate(Classifier):
    """Softmax regression ``p = softmax(W x + b)`` trained by full-batch
    gradient descent on mean cross-entropy plus ``l2/2 * ||W||^2``.

    Training runs on internally standardized inputs and the scaling is folded
    back into ``W`` and ``b`` afterwards, so ``W``/``b`` act on the raw
    (encoded) feature vectors. A step that would raise the objective is
    retried with half the learning rate; ``loss_history_`` is therefore
    non-increasing.
    """

    kind = "surrogate"

    def __init__(self, lr=0.1, epochs=200, l2=1e-4, seed=0):
        self.lr = float(lr)
        self.epochs = int(epochs)
        self.l2 = float(l2)
        self.seed = seed
        self.n_features = None

    def params(self) -> dict:
        return {"lr": self.lr, "epochs": self.epochs, "l2": self.l2, "seed": self.seed}

    @classmethod
    def from_weights(cls, W, b) -> "SoftmaxSurrogate":
        model = cls()
        model._set(np.asarray(W, dtype=np.float64), np.asarray(b, dtype=np.float64))
        model.loss_history_ = ()
        return model

    def _set(self, W, b):
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ValueError(f"incompatible shapes W{W.shape} b{b.shape}")
        self.W = frozen(W)
        self.b = frozen(b)
        self.n_classes, self.n_features = W.shape

    def fit(self, X, y, n_classes=None):
        X, y, k = check_training_data(X, y, n_classes)
        n, f = X.shape
        mu = X.mean(axis=0)
        sd = np.maximum(X.std(axis=0), 1e-12)
        Z = (X - mu) / sd
        Y = np.eye(k)[y]
        rng = np.random.default_rng(self.seed)
        V = rng.normal(0.0, 0.01, (k, f))
        c = np.zeros(k)

        def objective(V, c):
            P = softmax(Z @ V.T + c)
            ce = -np.mean(np.log(np.clip(P[np.arange(n), y], 1e-300, None)))
            return ce + 0.5 * self.l2 * float(np.sum(V * V)), P

        loss, P = objective(V, c)
        history = [loss]
        lr = self.lr
        for _ in range(self.epochs):
            G = (P - Y) / n
            gV = G.T @ Z + self.l2 * V
            gc = G.sum(axis=0)
            for _ in range(40):
                V_new, c_new = V - lr * gV, c - lr * gc
                new_loss, new_P = objective(V_new, c_new)
                if new_loss <= loss:
                    break
                lr *= 0.5
            else:
                break
            V, c, loss, P = V_new, c_new, new_loss, new_P
            history.append(loss)

        self._set(V / sd, c - V @ (mu / sd))
        self.loss_history_ = tuple(history)
        return self

    def logits(self, X) -> np.ndarray:
        X = self._check_rows(X)
        return X @ self.W.T + self.b

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.logits(X))

    def loss(self, X, y) -> np.ndarray:
        """Per-row cross-entropy."""
        P = self.predict_proba(X)
        y = self._check_labels(y, len(P))
        return -np.log(np.clip(P[np.arange(len(P)), y], 1e-300, None))

    def _check_labels(self, y, n) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y))
        if y.shape != (n,):
            raise BadLabel(f"expected {n} labels, got shape {y.shape}")
        if not np.issubdtype(y.dtype, np.integer) or y.min(initial=0) < 0 or y.max(initial=0) >= self.n_classes:
            raise BadLabel(f"labels must be integers in [0, {self.n_classes})")
        return y.astype(np.int64)

    def input_gradients(self, X, y) -> np.ndarray:
        """Row-wise gradient of the cross-entropy w.r.t. the input: ``(p - onehot(y)) W``."""
        X = self._check_rows(X)
        y = self._check_labels(y, len(X))
        P = softmax(X @ self.W.T + self.b)
        P[np.arange(len(X)), y] -= 1.0
        return P @ self.W

    def state(self) -> dict:
        return {"W": self.W.tolist(), "b": self.b.tolist(), "loss_history": list(self.loss_history_)}

    @classmethod
    def from_state(cls, params: dict, state: dict, n_classes: int, n_features: int) -> "SoftmaxSurrogate":
        model = cls(**params)
        model._set(
            np.asarray(state["W"], dtype=np.float64).reshape(n_classes, n_features),
            np.asarray(state["b"], dtype=np.float64),
        )
        model.loss_history_ = tuple(state.get("loss_history", ()))
        return model


def input_gradient(surrogate: SoftmaxSurrogate, x, y) -> np.ndarray:
    """Gradient of the cross-entropy loss w.r.t. a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != surrogate.n_features:
        raise WidthMismatch(f"expected a vector of length {surrogate.n_features}, got shape {x.shape}")
    if isinstance(y, bool) or not isinstance(y, (int, np.integer)):
        raise BadLabel(f"label must be an integer class id, got {y!r}")
    return surrogate.input_gradients(x[None, :], np.array([int(y)]))[0]
