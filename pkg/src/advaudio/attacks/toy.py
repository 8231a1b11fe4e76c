"""Affine classifiers with closed-form geometry, used as attack oracles."""
from __future__ import annotations

import numpy as np

from ..models.losses import ClassScore, Constant, CrossEntropy, Margin


def _log_softmax(z):
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _softmax(z):
    return np.exp(_log_softmax(z))


class AffineClassifier:
    """Logits z = W x + b; exposes the same attack surface as AudioClassifier."""

    dtype = "float64"
    sample_rate = None

    def __init__(self, W, b=None, name="affine"):
        self.W = np.asarray(W, dtype=np.float64)
        if self.W.ndim != 2 or self.W.shape[0] < 2:
            raise ValueError("W must be (k >= 2, d)")
        self.b = np.zeros(self.W.shape[0]) if b is None else np.asarray(b, dtype=np.float64)
        self.name = name

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    def decision_function(self, X):
        return np.atleast_2d(X) @ self.W.T + self.b

    def predict_proba(self, X):
        return _softmax(self.decision_function(X))

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def logit_jacobian(self, x, classes=None):
        z = self.decision_function(x)[0]
        rows = self.W if classes is None else self.W[list(classes)]
        return z, _softmax(z), rows.copy()

    def surrogate_vjp(self, x, seed_fn):
        z = self.decision_function(x)[0]
        seed = np.asarray(seed_fn(z), dtype=np.float64)
        return z, _softmax(z), seed @ self.W

    def margin_and_gradient(self, x, positive, negative):
        z = self.decision_function(x)[0]
        return z, _softmax(z), self.W[positive] - self.W[negative]

    def input_gradient(self, x, loss):
        z = self.decision_function(x)[0]
        p = _softmax(z)
        if isinstance(loss, CrossEntropy):
            return float(-_log_softmax(z)[loss.label]), (p - np.eye(len(z))[loss.label]) @ self.W
        if isinstance(loss, ClassScore):
            if loss.kind == "prob":
                return float(p[loss.label]), p[loss.label] * (self.W[loss.label] - p @ self.W)
            return float(z[loss.label]), self.W[loss.label].copy()
        if isinstance(loss, Margin):
            return float(z[loss.positive] - z[loss.negative]), self.W[loss.positive] - self.W[loss.negative]
        if isinstance(loss, Constant):
            return float(loss.value), np.zeros(self.W.shape[1])
        raise TypeError(f"unsupported loss spec {loss!r}")


def logistic_classifier(w, b=0.0) -> AffineClassifier:
    """Binary D(x) = sigmoid(w.x + b) written as logits [0, w.x + b]."""
    w = np.asarray(w, dtype=np.float64)
    return AffineClassifier(np.stack([np.zeros_like(w), w]), np.array([0.0, b]), name="logistic")
