"""Five miniature classifier networks built from diffgraph ops.

Logmel networks take (N, 1, frames, mels) images; ``DenseWavMini`` takes
(N, 1, samples) waveforms. Single-head networks return logits (N, k);
multi-head networks return averaged head probabilities (N, k).
"""
from __future__ import annotations

import inspect
from collections import OrderedDict

import numpy as np

from ..diffgraph import Tensor, ops

ARCHITECTURES = ("vgg_mini", "crnn_mini", "gcnn_mini", "dense_mel_mini", "dense_wav_mini")


class Network:
    """Parameter container plus a forward pass.

    Parameters are drawn in construction order from one generator, so a
    (kind, hyperparameters, seed) triple fixes every weight.
    """

    multi_head = False
    input_mode = "logmel"

    def __init__(self, n_classes: int, seed: int, dtype=np.float32, **hp):
        self.n_classes = n_classes
        self.dtype = np.dtype(dtype)
        bound = inspect.signature(self.build).bind(**hp)
        bound.apply_defaults()
        self.hp = {k: tuple(v) if isinstance(v, list) else v for k, v in bound.arguments.items()}
        self.params: OrderedDict[str, Tensor] = OrderedDict()
        self._rng = np.random.default_rng(seed)
        self.build(**self.hp)
        del self._rng

    def param(self, name: str, shape, fan_in: int | None = None) -> Tensor:
        if fan_in is None:
            value = np.zeros(shape)
        else:
            bound = np.sqrt(6.0 / fan_in)
            value = self._rng.uniform(-bound, bound, size=shape)
        t = Tensor(value.astype(self.dtype), requires_grad=True)
        self.params[name] = t
        return t

    def conv2d(self, name, cin, cout, k=3):
        self.param(f"{name}.w", (cout, cin, k, k), cin * k * k)
        self.param(f"{name}.b", (cout,))

    def conv1d(self, name, cin, cout, k):
        self.param(f"{name}.w", (cout, cin, k), cin * k)
        self.param(f"{name}.b", (cout,))

    def linear(self, name, nin, nout):
        self.param(f"{name}.w", (nin, nout), nin)
        self.param(f"{name}.b", (nout,))

    def apply_conv2d(self, name, x, padding=1):
        return ops.conv2d(x, self.params[f"{name}.w"], self.params[f"{name}.b"], padding=padding)

    def apply_conv1d(self, name, x, stride=1, padding=0):
        return ops.conv1d(x, self.params[f"{name}.w"], self.params[f"{name}.b"], stride=stride, padding=padding)

    def apply_linear(self, name, x):
        return ops.add(ops.matmul(x, self.params[f"{name}.w"]), self.params[f"{name}.b"])

    def build(self, **hp):
        raise NotImplementedError

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def astype(self, dtype) -> "Network":
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.dtype = np.dtype(dtype)
        clone.params = OrderedDict(
            (k, Tensor(v.data.astype(dtype), requires_grad=True)) for k, v in self.params.items()
        )
        return clone


def _time_pool_flatten(x: Tensor) -> Tensor:
    # (N, C, T, F) -> mean over time -> (N, C*F)
    m = ops.mean(x, axis=2)
    return ops.reshape(m, (m.shape[0], m.shape[1] * m.shape[2]))


def _flat_features(n_mels: int, pools: int, channels: int) -> int:
    f = n_mels
    for _ in range(pools):
        f //= 2
    return channels * f


class VGGMini(Network):
    """Stacked conv -> relu -> 2x2 max-pool blocks."""

    def build(self, widths=(8, 16, 32), n_mels=64):
        cin = 1
        for i, w in enumerate(widths):
            self.conv2d(f"conv{i}", cin, w)
            cin = w
        self.linear("fc", _flat_features(n_mels, len(widths), cin), self.n_classes)

    def forward(self, x):
        for i in range(len(self.hp["widths"])):
            x = ops.max_pool2d(ops.relu(self.apply_conv2d(f"conv{i}", x)), 2)
        return self.apply_linear("fc", _time_pool_flatten(x))


class GCNNMini(Network):
    """Gated conv blocks: conv(x) * sigmoid(conv_gate(x))."""

    def build(self, widths=(8, 16, 32), n_mels=64):
        cin = 1
        for i, w in enumerate(widths):
            self.conv2d(f"conv{i}", cin, w)
            self.conv2d(f"gate{i}", cin, w)
            cin = w
        self.linear("fc", _flat_features(n_mels, len(widths), cin), self.n_classes)

    def forward(self, x):
        for i in range(len(self.hp["widths"])):
            lin = self.apply_conv2d(f"conv{i}", x)
            gate = ops.sigmoid(self.apply_conv2d(f"gate{i}", x))
            x = ops.max_pool2d(ops.mul(lin, gate), 2)
        return self.apply_linear("fc", _time_pool_flatten(x))


class CRNNMini(Network):
    """Two conv blocks followed by a bidirectional GRU over time frames."""

    def build(self, widths=(8, 16), hidden=16, n_mels=64):
        cin = 1
        for i, w in enumerate(widths):
            self.conv2d(f"conv{i}", cin, w)
            cin = w
        nin = _flat_features(n_mels, len(widths), cin)
        for d in ("fwd", "bwd"):
            self.param(f"gru_{d}.wx", (nin, 3 * hidden), nin)
            self.param(f"gru_{d}.wh", (hidden, 3 * hidden), hidden)
            self.param(f"gru_{d}.b", (3 * hidden,))
        self.linear("fc", 2 * hidden, self.n_classes)

    def _gru(self, seq: Tensor, direction: str) -> list[Tensor]:
        n, steps, _ = seq.shape
        hidden = self.params[f"gru_{direction}.wh"].shape[0]
        proj = ops.add(ops.matmul(seq, self.params[f"gru_{direction}.wx"]), self.params[f"gru_{direction}.b"])
        wh = self.params[f"gru_{direction}.wh"]
        h = Tensor(np.zeros((n, hidden), dtype=self.dtype))
        order = range(steps) if direction == "fwd" else range(steps - 1, -1, -1)
        outs = [None] * steps
        for t in order:
            xt = proj[:, t, :]
            ht = ops.matmul(h, wh)
            z = ops.sigmoid(ops.add(xt[:, :hidden], ht[:, :hidden]))
            r = ops.sigmoid(ops.add(xt[:, hidden:2 * hidden], ht[:, hidden:2 * hidden]))
            cand = ops.tanh(ops.add(xt[:, 2 * hidden:], ops.mul(r, ht[:, 2 * hidden:])))
            h = ops.add(cand, ops.mul(z, ops.sub(h, cand)))  # (1-z)*cand + z*h
            outs[t] = h
        return outs

    def forward(self, x):
        for i in range(len(self.hp["widths"])):
            x = ops.max_pool2d(ops.relu(self.apply_conv2d(f"conv{i}", x)), 2)
        n, c, t, f = x.shape
        seq = ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (n, t, c * f))
        fwd = ops.stack(self._gru(seq, "fwd"), axis=1)
        bwd = ops.stack(self._gru(seq, "bwd"), axis=1)
        both = ops.concatenate([fwd, bwd], axis=2)
        return self.apply_linear("fc", ops.mean(both, axis=1))


class _DenseHeads(Network):
    multi_head = True

    def heads(self, name_in: int, n_heads: int):
        for h in range(n_heads):
            self.linear(f"head{h}", name_in, self.n_classes)

    def average_heads(self, feat: Tensor) -> Tensor:
        probs = [ops.softmax(self.apply_linear(f"head{h}", feat)) for h in range(self.hp["n_heads"])]
        total = probs[0]
        for p in probs[1:]:
            total = ops.add(total, p)
        return ops.mul(total, 1.0 / len(probs))

    def head_logits(self, x: Tensor) -> list[Tensor]:
        feat = self.features(x)
        return [self.apply_linear(f"head{h}", feat) for h in range(self.hp["n_heads"])]

    def head_probabilities(self, x: Tensor) -> list[np.ndarray]:
        return [ops.softmax(z).data for z in self.head_logits(x)]

    def forward(self, x):
        return self.average_heads(self.features(x))


class DenseMelMini(_DenseHeads):
    """Conv stem, two dense blocks (inputs concatenated to outputs), 8 softmax heads."""

    def build(self, stem=8, growth=8, layers=2, n_heads=8, n_mels=64):
        self.conv2d("stem", 1, stem)
        c = stem
        for b in range(2):
            for i in range(layers):
                self.conv2d(f"block{b}.{i}", c, growth)
                c += growth
        self.heads(_flat_features(n_mels, 3, c), n_heads)

    def features(self, x):
        x = ops.max_pool2d(ops.relu(self.apply_conv2d("stem", x)), 2)
        for b in range(2):
            for i in range(self.hp["layers"]):
                x = ops.concatenate([x, ops.relu(self.apply_conv2d(f"block{b}.{i}", x))], axis=1)
            x = ops.max_pool2d(x, 2)
        return _time_pool_flatten(x)


class DenseWavMini(_DenseHeads):
    """Strided learnable filterbank on raw audio, two 1-D dense blocks, 8 softmax heads."""

    input_mode = "raw"

    def build(self, filters=16, kernel=256, stride=64, growth=8, layers=2, n_heads=8):
        self.conv1d("frontend", 1, filters, kernel)
        c = filters
        for b in range(2):
            for i in range(layers):
                self.conv1d(f"block{b}.{i}", c, growth, 3)
                c += growth
        self.heads(2 * c, n_heads)

    def features(self, x):
        hp = self.hp
        x = self.apply_conv1d("frontend", x, stride=hp["stride"])
        # log(1 + relu(x)) compression
        x = ops.max_pool1d(ops.log(ops.relu(x), eps=1.0), 4)
        for b in range(2):
            for i in range(hp["layers"]):
                x = ops.concatenate([x, ops.relu(self.apply_conv1d(f"block{b}.{i}", x, padding=1))], axis=1)
            x = ops.max_pool1d(x, 2)
        # mean and max over time
        mean = ops.mean(x, axis=2)
        peak = ops.max_pool1d(x, x.shape[2])
        return ops.concatenate([mean, ops.reshape(peak, mean.shape)], axis=1)


NETWORKS = {
    "vgg_mini": VGGMini,
    "crnn_mini": CRNNMini,
    "gcnn_mini": GCNNMini,
    "dense_mel_mini": DenseMelMini,
    "dense_wav_mini": DenseWavMini,
}


def make_network(kind: str, n_classes: int, seed: int, dtype=np.float32, **hp) -> Network:
    if kind not in NETWORKS:
        raise ValueError(f"unknown architecture {kind!r}; choose from {ARCHITECTURES}")
    if n_classes < 2:
        raise ValueError(f"n_classes must be >= 2, got {n_classes}")
    return NETWORKS[kind](n_classes, seed, dtype, **hp)
