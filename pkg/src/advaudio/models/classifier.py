"""scikit-learn style audio classifier wrapping a miniature network.

Besides ``fit``/``predict``/``predict_proba`` the estimator exposes the
perfect-knowledge surface used by gradient attacks: logit surrogates,
their Jacobian and input gradients with respect to the raw waveform.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..audio_io import Waveform
from ..diffgraph import Tensor, gradients, ops, topo_order
from ..features import FrozenStats, LogmelFrontend
from .losses import ClassScore, Constant, CrossEntropy, LossSpec, Margin
from .networks import ARCHITECTURES, Network, make_network
from .optim import Adam

# logit surrogate for multi-head networks: log(avg prob + LOG_EPS)
LOG_EPS = 1e-12


@dataclass(frozen=True)
class Prediction:
    probs: np.ndarray
    label: int
    confidence: float


def as_batch(X, sample_rate: int | None = None, dtype=None) -> np.ndarray:
    """Coerce a Waveform, a list of Waveforms or an array into (n, m) samples."""
    if isinstance(X, Waveform):
        X = [X]
    if isinstance(X, (list, tuple)) and X and isinstance(X[0], Waveform):
        if sample_rate is not None:
            for w in X:
                if w.sample_rate != sample_rate:
                    raise ValueError(
                        f"waveform {w.source_id!r} is at {w.sample_rate} Hz; model expects {sample_rate} Hz"
                    )
        lengths = {len(w) for w in X}
        if len(lengths) != 1:
            raise ValueError(f"waveforms in a batch must share a length, got {sorted(lengths)}")
        X = np.stack([w.samples for w in X])
    X = np.asarray(X)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ValueError(f"expected (n_examples, n_samples), got shape {X.shape}")
    if X.dtype.kind != "f":
        X = X.astype(np.float64)
    if not np.isfinite(X).all():
        raise ValueError("input contains non-finite samples")
    return X.astype(dtype, copy=False) if dtype is not None else X


class AudioClassifier(ClassifierMixin, BaseEstimator):
    """Miniature sound-event classifier over raw 32 kHz waveforms.

    Parameters
    ----------
    arch : one of ``vgg_mini``, ``crnn_mini``, ``gcnn_mini``,
        ``dense_mel_mini``, ``dense_wav_mini``.
    n_classes : number of output classes k (>= 2).
    network_params : dict of architecture hyperparameters (layer widths).
    epochs, learning_rate, batch_size : Adam training schedule.
    random_state : seeds initialisation and minibatch order.
    dtype : working precision for training and attacks.
    """

    def __init__(self, arch="vgg_mini", n_classes=8, network_params=None, epochs=20,
                 learning_rate=3e-3, batch_size=16, random_state=0, sample_rate=32000, dtype="float32"):
        self.arch = arch
        self.n_classes = n_classes
        self.network_params = network_params
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.random_state = random_state
        self.sample_rate = sample_rate
        self.dtype = dtype

    # ------------------------------------------------------------ construction

    def initialize(self) -> "AudioClassifier":
        """Build the network with seeded weights, without training."""
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}; choose from {ARCHITECTURES}")
        if self.n_classes < 2:
            raise ValueError(f"n_classes must be >= 2, got {self.n_classes}")
        self.network_ = make_network(
            self.arch, self.n_classes, self.random_state, np.dtype(self.dtype), **(self.network_params or {})
        )
        self.frontend_ = LogmelFrontend(sample_rate=self.sample_rate, standardize=self.arch == "dense_mel_mini")
        self.classes_ = np.arange(self.n_classes)
        self.history_ = []
        return self

    def astype(self, dtype) -> "AudioClassifier":
        """Copy with parameters cast to ``dtype`` (e.g. float64 for gradient checks)."""
        check_is_fitted(self, "network_")
        clone = type(self)(**self.get_params())
        clone.dtype = np.dtype(dtype).name
        clone.__dict__.update({k: v for k, v in self.__dict__.items() if k.endswith("_")})
        clone.network_ = self.network_.astype(dtype)
        return clone

    @property
    def multi_head(self) -> bool:
        return self.network_.multi_head

    @property
    def input_mode(self) -> str:
        return self.network_.input_mode

    # ------------------------------------------------------------ forward

    def _working(self, X) -> np.ndarray:
        return as_batch(X, self.sample_rate, np.dtype(self.dtype))

    def _features(self, x: Tensor, frozen: FrozenStats | None = None):
        if self.network_.input_mode == "raw":
            return ops.reshape(x, (x.shape[0], 1, x.shape[1])), frozen
        feats, stats = self.frontend_.graph(x, frozen)
        return ops.reshape(feats, (feats.shape[0], 1) + feats.shape[1:]), stats

    def _head_output(self, feats: Tensor) -> Tensor:
        return self.network_.forward(feats)

    def _surrogate(self, out: Tensor) -> Tensor:
        if self.network_.multi_head:
            return ops.log(out, eps=LOG_EPS)
        return out

    def _probs(self, out: Tensor) -> np.ndarray:
        if self.network_.multi_head:
            return out.data
        return ops.softmax(out).data

    def frozen_stats(self, X) -> FrozenStats | None:
        """Frontend constants computed at X (None for raw-input models)."""
        check_is_fitted(self, "network_")
        if self.network_.input_mode == "raw":
            return None
        _, stats = self.frontend_.graph(Tensor(self._working(X)))
        return stats

    def forward(self, x: Tensor, frozen: FrozenStats | None = None) -> tuple[Tensor, np.ndarray, FrozenStats | None]:
        """Differentiable pass: (logit surrogate tensor, probabilities, frozen stats)."""
        check_is_fitted(self, "network_")
        feats, stats = self._features(x, frozen)
        out = self._head_output(feats)
        return self._surrogate(out), self._probs(out), stats

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "network_")
        X = self._working(X)
        chunks = []
        for start in range(0, X.shape[0], 32):
            feats, _ = self._features(Tensor(X[start:start + 32]))
            chunks.append(self._probs(self._head_output(feats)))
        return np.concatenate(chunks).astype(np.float64)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def decision_function(self, X) -> np.ndarray:
        """Logit surrogates: logits, or log averaged probability for multi-head networks."""
        check_is_fitted(self, "network_")
        z, _, _ = self.forward(Tensor(self._working(X)))
        return z.data.astype(np.float64)

    def head_probabilities(self, X) -> list[np.ndarray]:
        if not self.network_.multi_head:
            raise ValueError(f"{self.arch} has a single logits layer")
        feats, _ = self._features(Tensor(self._working(X)))
        return self.network_.head_probabilities(feats)

    # ------------------------------------------------------------ gradients

    def _check_class(self, j: int) -> None:
        if not 0 <= int(j) < self.n_classes:
            raise ValueError(f"class index {j} outside [0, {self.n_classes})")

    def loss_tensor(self, x: Tensor, loss: LossSpec, frozen: FrozenStats | None = None) -> Tensor:
        """Scalar loss for a single example held in a (1, m) tensor."""
        z, probs, _ = self.forward(x, frozen)
        if isinstance(loss, Constant):
            return ops.add(ops.mul(ops.sum(z), 0.0), loss.value)
        if isinstance(loss, CrossEntropy):
            self._check_class(loss.label)
            logp = z if self.network_.multi_head else ops.log_softmax(z)
            return ops.mul(logp[0, int(loss.label)], -1.0)
        if isinstance(loss, ClassScore):
            self._check_class(loss.label)
            if loss.kind == "prob":
                p = ops.exp(z) if self.network_.multi_head else ops.softmax(z)
                return p[0, int(loss.label)]
            return z[0, int(loss.label)]
        if isinstance(loss, Margin):
            self._check_class(loss.positive)
            self._check_class(loss.negative)
            return ops.sub(z[0, int(loss.positive)], z[0, int(loss.negative)])
        raise TypeError(f"unsupported loss spec {loss!r}")

    def input_gradient(self, X, loss: LossSpec, frozen: FrozenStats | None = None) -> tuple[float, np.ndarray]:
        """Loss value and d(loss)/d(waveform) for one example.

        Frontend constants are taken at ``X`` unless ``frozen`` is given and
        are excluded from differentiation either way.
        """
        x0 = self._working(X)
        if x0.shape[0] != 1:
            raise ValueError("input_gradient works on one example at a time")
        leaf = Tensor(x0, requires_grad=True)
        out = self.loss_tensor(leaf, loss, frozen)
        (g,) = gradients(out, [leaf])
        return out.item(), g.reshape(np.shape(X) if isinstance(X, np.ndarray) else x0.shape[1:])

    def logit_jacobian(self, X, classes=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(surrogate logits, probabilities, Jacobian rows for ``classes``) at one example."""
        x0 = self._working(X)
        if x0.shape[0] != 1:
            raise ValueError("logit_jacobian works on one example at a time")
        leaf = Tensor(x0, requires_grad=True)
        z, probs, _ = self.forward(leaf)
        classes = range(self.n_classes) if classes is None else classes
        order = topo_order(z)
        rows = []
        for j in classes:
            seed = np.zeros_like(z.data)
            seed[0, j] = 1.0
            (g,) = gradients(z, [leaf], seed=seed, order=order)
            rows.append(g[0])
        return z.data[0].astype(np.float64), probs[0].astype(np.float64), np.array(rows, dtype=np.float64)

    def surrogate_vjp(self, X, seed_fn):
        """One forward and one backward pass at a single example.

        ``seed_fn`` maps the surrogate logits (float64, length k) to the
        cotangent vector, so the backward seed can depend on the forward
        result. Returns (logits, probabilities, d(seed . z)/dx).
        """
        x0 = self._working(X)
        if x0.shape[0] != 1:
            raise ValueError("surrogate_vjp works on one example at a time")
        leaf = Tensor(x0, requires_grad=True)
        z, probs, _ = self.forward(leaf)
        z64 = z.data[0].astype(np.float64)
        seed = np.asarray(seed_fn(z64), dtype=np.float64)
        if seed.any():
            (g,) = gradients(z, [leaf], seed=seed.reshape(z.shape).astype(z.dtype))
            g = g[0].astype(np.float64)
        else:
            g = np.zeros(x0.shape[1])
        return z64, probs[0].astype(np.float64), g

    def margin_and_gradient(self, X, positive: int, negative: int):
        """(surrogate logits, probabilities, d(z_pos - z_neg)/dx) from one forward pass."""
        self._check_class(positive)
        self._check_class(negative)
        seed = np.zeros(self.n_classes)
        seed[positive] += 1.0
        seed[negative] -= 1.0
        return self.surrogate_vjp(X, lambda z: seed)

    # ------------------------------------------------------------ training

    def _batch_loss(self, feats: np.ndarray, y: np.ndarray) -> Tensor:
        rows = np.arange(len(y))
        if self.network_.multi_head:
            # each head gets its own cross-entropy; a confidently wrong head
            # receives almost no gradient through the averaged probability
            heads = self.network_.head_logits(Tensor(feats))
            total = ops.mean(ops.log_softmax(heads[0])[rows, y])
            for z in heads[1:]:
                total = ops.add(total, ops.mean(ops.log_softmax(z)[rows, y]))
            return ops.mul(total, -1.0 / len(heads))
        picked = ops.log_softmax(self._head_output(Tensor(feats)))[rows, y]
        return ops.mul(ops.mean(picked), -1.0)

    def _training_features(self, X: np.ndarray) -> np.ndarray:
        chunks = []
        for start in range(0, X.shape[0], 32):
            feats, _ = self._features(Tensor(X[start:start + 32]))
            chunks.append(feats.data)
        return np.concatenate(chunks)

    def fit(self, X, y, X_val=None, y_val=None):
        """Train from scratch with Adam on mean cross-entropy (per head for multi-head networks)."""
        X = self._working(X)
        y = np.asarray(y, dtype=np.int64)
        if X.shape[0] == 0:
            raise ValueError("empty training split")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} examples but y has {y.shape[0]} labels")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        self.initialize()
        feats = self._training_features(X)
        params = list(self.network_.params.values())
        opt = Adam(params, lr=self.learning_rate)
        rng = np.random.default_rng([self.random_state, 1])
        self.initial_loss_ = self._batch_loss(feats, y).item()
        for _ in range(self.epochs):
            order = rng.permutation(len(y))
            total = 0.0
            for start in range(0, len(y), self.batch_size):
                idx = np.sort(order[start:start + self.batch_size])
                loss = self._batch_loss(feats[idx], y[idx])
                grads = gradients(loss, params)
                opt.step(grads)
                total += loss.item() * len(idx)
            self.history_.append(total / len(y))
        self.train_loss_ = self._batch_loss(feats, y).item()
        return self

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.non_deterministic = False
        return tags


def build_model(arch: str, seed: int, n_classes: int = 8, **kwargs) -> AudioClassifier:
    """Untrained classifier with deterministic seeded weights."""
    return AudioClassifier(arch=arch, n_classes=n_classes, random_state=seed, **kwargs).initialize()


def predict(model: AudioClassifier, w: Waveform) -> Prediction:
    """Classify one waveform; ties resolve to the lowest class index."""
    probs = model.predict_proba(w)[0]
    label = int(np.argmax(probs))
    return Prediction(probs, label, float(probs[label]))


class QueryOnly:
    """Zero-knowledge view of a classifier: predictions only, no gradients."""

    __slots__ = ("_model", "name")

    def __init__(self, model: AudioClassifier, name: str = ""):
        self._model = model
        self.name = name or getattr(model, "arch", type(model).__name__)

    @property
    def n_classes(self) -> int:
        return self._model.n_classes

    def predict_proba(self, X) -> np.ndarray:
        return self._model.predict_proba(X)

    def predict(self, X) -> np.ndarray:
        return self._model.predict(X)


__all__ = [
    "AudioClassifier", "Prediction", "QueryOnly", "build_model", "predict", "as_batch", "Network",
]
