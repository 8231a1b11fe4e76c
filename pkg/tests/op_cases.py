"""Scalar-valued grad-check probes for every differentiable op."""
import numpy as np

from advaudio.diffgraph import Tensor, ops


def _nudge(a, margin=1e-3):
    a = np.asarray(a, dtype=np.float64)
    return np.where(np.abs(a) < margin, np.sign(a + 1e-12) * margin + a, a)


def _distinct(rng, shape):
    # strictly distinct values keep max-pool away from ties
    n = int(np.prod(shape))
    return (rng.permutation(n) * 0.01 + rng.uniform(0, 0.001, n)).reshape(shape) - n * 0.005


def op_cases():
    """Scalar-valued probes for every catalogued op, keyed by name."""
    def w(rng, *shape):
        return Tensor(rng.normal(size=shape))

    return {
        "add": (lambda rng: rng.normal(size=(3, 4)), lambda t, rng: ops.sum(ops.add(t, w(rng, 4)) * w(rng, 3, 4))),
        "sub": (lambda rng: rng.normal(size=(3, 4)), lambda t, rng: ops.sum(ops.sub(w(rng, 3, 1), t) * w(rng, 3, 4))),
        "mul": (lambda rng: rng.normal(size=(3, 4)), lambda t, rng: ops.sum(ops.mul(t, t) * w(rng, 4))),
        "div": (lambda rng: rng.uniform(1, 2, size=(3, 4)), lambda t, rng: ops.sum(ops.div(w(rng, 3, 4), t))),
        "matmul": (lambda rng: rng.normal(size=(3, 4)), lambda t, rng: ops.sum(ops.matmul(t, w(rng, 4, 2)) * w(rng, 3, 2))),
        "batched_matmul": (lambda rng: rng.normal(size=(2, 3, 4)), lambda t, rng: ops.sum(ops.matmul(w(rng, 5, 3), t) * w(rng, 2, 5, 4))),
        "conv1d": (lambda rng: rng.normal(size=(2, 2, 11)), lambda t, rng: ops.sum(ops.conv1d(t, w(rng, 3, 2, 4), w(rng, 3), stride=2, padding=1) * w(rng, 2, 3, 5))),
        "conv2d": (lambda rng: rng.normal(size=(2, 2, 6, 5)), lambda t, rng: ops.sum(ops.conv2d(t, w(rng, 3, 2, 3, 3), w(rng, 3), padding=1) * w(rng, 2, 3, 6, 5))),
        "max_pool2d": (lambda rng: _distinct(rng, (1, 2, 5, 4)), lambda t, rng: ops.sum(ops.max_pool2d(t, 2) * w(rng, 1, 2, 2, 2))),
        "avg_pool2d": (lambda rng: rng.normal(size=(1, 2, 5, 4)), lambda t, rng: ops.sum(ops.avg_pool2d(t, 2) * w(rng, 1, 2, 2, 2))),
        "max_pool1d": (lambda rng: _distinct(rng, (1, 2, 9)), lambda t, rng: ops.sum(ops.max_pool1d(t, 3) * w(rng, 1, 2, 3))),
        "avg_pool1d": (lambda rng: rng.normal(size=(1, 2, 9)), lambda t, rng: ops.sum(ops.avg_pool1d(t, 3) * w(rng, 1, 2, 3))),
        "relu": (lambda rng: _nudge(rng.normal(size=(4, 3))), lambda t, rng: ops.sum(ops.relu(t) * w(rng, 4, 3))),
        "sigmoid": (lambda rng: rng.normal(size=7), lambda t, rng: ops.sum(ops.sigmoid(t) * w(rng, 7))),
        "tanh": (lambda rng: rng.normal(size=7), lambda t, rng: ops.sum(ops.tanh(t) * w(rng, 7))),
        "exp": (lambda rng: rng.normal(size=7), lambda t, rng: ops.sum(ops.exp(t) * w(rng, 7))),
        "log": (lambda rng: rng.uniform(0.1, 3, size=7), lambda t, rng: ops.sum(ops.log(t, eps=1e-10) * w(rng, 7))),
        "softmax": (lambda rng: rng.normal(size=(3, 5)), lambda t, rng: ops.sum(ops.softmax(t) * w(rng, 3, 5))),
        "log_softmax": (lambda rng: rng.normal(size=(3, 5)), lambda t, rng: ops.sum(ops.log_softmax(t) * w(rng, 3, 5))),
        "concatenate": (lambda rng: rng.normal(size=(2, 3)), lambda t, rng: ops.sum(ops.concatenate([t, ops.tanh(t)], axis=1) * w(rng, 2, 6))),
        "mean": (lambda rng: rng.normal(size=(3, 4)), lambda t, rng: ops.sum(ops.mean(t, axis=0) * w(rng, 4))),
        "getitem": (lambda rng: rng.normal(size=(4, 5)), lambda t, rng: ops.sum(t[1:3, ::2] * w(rng, 2, 3))),
        "gather": (lambda rng: rng.normal(size=6), lambda t, rng: ops.sum(t[np.array([0, 2, 2, 5])] * w(rng, 4))),
        "frame": (lambda rng: rng.normal(size=(2, 20)), lambda t, rng: ops.sum(ops.frame(t, 8, 4) * w(rng, 2, 4, 8))),
        "frame_odd_hop": (lambda rng: rng.normal(size=19), lambda t, rng: ops.sum(ops.frame(t, 7, 3) * w(rng, 5, 7))),
        "dft_real": (lambda rng: rng.normal(size=(2, 16)), lambda t, rng: ops.sum(ops.dft_real(t) * w(rng, 2, 9))),
        "dft_imag": (lambda rng: rng.normal(size=(2, 16)), lambda t, rng: ops.sum(ops.dft_imag(t) * w(rng, 2, 9))),
        "power_spectrum": (lambda rng: rng.normal(size=(2, 15)), lambda t, rng: ops.sum(ops.power_spectrum(t) * w(rng, 2, 8))),
        "square": (lambda rng: rng.normal(size=7), lambda t, rng: ops.sum(ops.square(t) * w(rng, 7))),
        "stack": (lambda rng: rng.normal(size=(2, 3)), lambda t, rng: ops.sum(ops.stack([t, ops.exp(t)], axis=1) * w(rng, 2, 2, 3))),
        "sum_axis": (lambda rng: rng.normal(size=(3, 4)), lambda t, rng: ops.sum(ops.sum(t, axis=1, keepdims=True) * w(rng, 3, 1))),
        "transpose_reshape": (lambda rng: rng.normal(size=(2, 3, 4)), lambda t, rng: ops.sum(ops.reshape(ops.transpose(t, (2, 0, 1)), (4, 6)) * w(rng, 4, 6))),
    }
