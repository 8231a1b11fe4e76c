"""Differentiable operations over :class:`Tensor`.

Every op computes its forward value with numpy and registers an exact
backward rule. Convolutions are cross-correlations (no kernel flip).
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, make_node


def _lift(a, like: Tensor | None = None) -> Tensor:
    if isinstance(a, Tensor):
        return a
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(a, dtype=dtype))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _lift(b, a)
    b = _lift(b)
    return _lift(a, b), b


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "add")
    return make_node(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add",
    )


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "sub")
    return make_node(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub",
    )


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "mul")

    def backward(g):
        ga = _unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _check_broadcast(a, b, "div")
    out = a.data / b.data

    def backward(g):
        ga = _unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / b.data, b.shape) if b.requires_grad else None
        return ga, gb

    return make_node(out, (a, b), backward, "div")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_node(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)
    return make_node(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return make_node(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return make_node(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor, eps: float = 0.0) -> Tensor:
    """Natural log of ``x + eps``."""
    shifted = x.data + x.dtype.type(eps) if eps else x.data
    if (shifted <= 0).any():
        raise FloatingPointError("log of a non-positive value")
    return make_node(np.log(shifted), (x,), lambda g: (g / shifted,), "log")


def square(x: Tensor) -> Tensor:
    return make_node(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,), "square")


# ---------------------------------------------------------------- reductions

def _norm_axis(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axis(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_node(np.asarray(out), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axis(axis, x.ndim)
    n = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    out = x.data.mean(axis=axes, keepdims=keepdims)
    scale = x.dtype.type(1.0 / n)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g * scale, x.shape).copy(),)

    return make_node(np.asarray(out), (x,), backward, "mean")


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return make_node(out, (x,), backward, "softmax")


def log_softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse
    sm = np.exp(out)

    def backward(g):
        return (g - sm * g.sum(axis=-1, keepdims=True),)

    return make_node(out, (x,), backward, "log_softmax")


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 1 or b.ndim < 1:
        raise ValueError(f"matmul: scalar operand, shapes {a.shape} and {b.shape}")
    ka = a.shape[-1]
    kb = b.shape[-2] if b.ndim > 1 else b.shape[0]
    if ka != kb:
        raise ValueError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        ad, bd = a.data, b.data
        gg = g
        if ad.ndim == 1:
            ad = ad[None, :]
            gg = np.expand_dims(gg, -2)
        if bd.ndim == 1:
            bd = bd[:, None]
            gg = np.expand_dims(gg, -1)
        ga = gb = None
        if a.requires_grad:
            ga = np.matmul(gg, np.swapaxes(bd, -1, -2))
            if a.ndim == 1:
                ga = ga.reshape(ga.shape[:-2] + (ga.shape[-1],))
            ga = _unbroadcast(ga, a.shape)
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(ad, -1, -2), gg)
            if b.ndim == 1:
                gb = gb.reshape(gb.shape[:-1])
            gb = _unbroadcast(gb, b.shape)
        return ga, gb

    return make_node(out, (a, b), backward, "matmul")


# ---------------------------------------------------------------- shape ops

def reshape(x: Tensor, shape) -> Tensor:
    return make_node(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return make_node(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),), "transpose")


def getitem(x: Tensor, index) -> Tensor:
    """Basic or advanced indexing; backward scatters with accumulation."""
    out = x.data[index]
    parts = index if isinstance(index, tuple) else (index,)
    advanced = any(isinstance(p, (list, np.ndarray)) for p in parts)

    def backward(g):
        full = np.zeros_like(x.data)
        if advanced:
            np.add.at(full, index, g)
        else:
            full[index] += g
        return (full,)

    return make_node(np.array(out, copy=True), (x,), backward, "getitem")


def concatenate(tensors, axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    ref = tensors[0]
    axis = axis % ref.ndim
    for t in tensors[1:]:
        if t.ndim != ref.ndim or any(
            t.shape[i] != ref.shape[i] for i in range(ref.ndim) if i != axis
        ):
            raise ValueError(f"concatenate: incompatible shapes {ref.shape} and {t.shape}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis)
            for i in range(len(tensors))
        )

    return make_node(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    expanded = [reshape(t, t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):]) for t in tensors]
    return concatenate(expanded, axis=axis)


def frame(x: Tensor, length: int, hop: int) -> Tensor:
    """Slice the last axis into overlapping frames: (..., m) -> (..., F, length)."""
    m = x.shape[-1]
    if m < length:
        raise ValueError(f"frame: signal of length {m} is shorter than one frame ({length})")
    n_frames = (m - length) // hop + 1
    out = sliding_window_view(x.data, length, axis=-1)[..., ::hop, :][..., :n_frames, :]

    def backward(g):
        full = np.zeros_like(x.data)
        if length % hop == 0:
            # overlap-add in hop-sized blocks
            blocks = length // hop
            for c in range(blocks):
                seg = g[..., c * hop:(c + 1) * hop].reshape(g.shape[:-2] + (n_frames * hop,))
                full[..., c * hop:c * hop + n_frames * hop] += seg
        else:
            for f in range(n_frames):
                full[..., f * hop:f * hop + length] += g[..., f, :]
        return (full,)

    return make_node(np.ascontiguousarray(out), (x,), backward, "frame")


# ---------------------------------------------------------------- spectral

def _half_spectrum_weights(n: int, n_bins: int, dtype) -> np.ndarray:
    # irfft doubles the interior bins; undo it so the adjoint is exact
    w = np.full(n_bins, 0.5, dtype=dtype)
    w[0] = 1.0
    if n % 2 == 0:
        w[-1] = 1.0
    return w


def dft_real(x: Tensor) -> Tensor:
    """Real part of the one-sided DFT along the last axis: sum_n x[n] cos(2 pi k n / N)."""
    n = x.shape[-1]
    out = np.fft.rfft(x.data, axis=-1).real.astype(x.dtype, copy=False)
    w = _half_spectrum_weights(n, out.shape[-1], x.dtype)

    def backward(g):
        return (np.fft.irfft(g * w, n=n, axis=-1).astype(x.dtype, copy=False) * n,)

    return make_node(np.ascontiguousarray(out), (x,), backward, "dft_real")


def dft_imag(x: Tensor) -> Tensor:
    """Imaginary part of the one-sided DFT: -sum_n x[n] sin(2 pi k n / N)."""
    n = x.shape[-1]
    out = np.fft.rfft(x.data, axis=-1).imag.astype(x.dtype, copy=False)
    w = _half_spectrum_weights(n, out.shape[-1], x.dtype)

    def backward(g):
        spec = 1j * (g * w)
        return (np.fft.irfft(spec, n=n, axis=-1).astype(x.dtype, copy=False) * n,)

    return make_node(np.ascontiguousarray(out), (x,), backward, "dft_imag")


def power_spectrum(x: Tensor) -> Tensor:
    """|one-sided DFT|^2 along the last axis; same values as dft_real^2 + dft_imag^2."""
    n = x.shape[-1]
    spec = np.fft.rfft(x.data, axis=-1)
    out = (spec.real ** 2 + spec.imag ** 2).astype(x.dtype, copy=False)
    w = _half_spectrum_weights(n, out.shape[-1], x.dtype)

    def backward(g):
        # sum of the dft_real and dft_imag adjoints applied to 2*g*re and 2*g*im
        return ((np.fft.irfft(spec * (g * w), n=n, axis=-1) * (2 * n)).astype(x.dtype, copy=False),)

    return make_node(out, (x,), backward, "power_spectrum")


def dft_basis(n: int, dtype=np.float64) -> tuple[np.ndarray, np.ndarray]:
    """Explicit (cos, -sin) basis matrices, shape (n, n//2 + 1) each."""
    k = np.arange(n // 2 + 1)
    t = np.arange(n)
    ang = 2.0 * np.pi * np.outer(t, k) / n
    return np.cos(ang).astype(dtype), (-np.sin(ang)).astype(dtype)


# ---------------------------------------------------------------- convolution

def _as_pair(v) -> tuple[int, int]:
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride=1, padding=0) -> Tensor:
    """Cross-correlation of (N, C, H, W) input with (O, C, KH, KW) weights."""
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"conv2d: incompatible shapes {x.shape} and {weight.shape}")
    sh, sw = _as_pair(stride)
    ph, pw = _as_pair(padding)
    n, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    hp, wp = h + 2 * ph, w + 2 * pw
    if hp < kh or wp < kw:
        raise ValueError(f"conv2d: kernel {weight.shape} larger than padded input {x.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    ho, wo = win.shape[2], win.shape[3]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)
    wmat = weight.data.reshape(o, c * kh * kw)
    out = (cols @ wmat.T).reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    parents = [x, weight]
    if bias is not None:
        out = out + bias.data.reshape(1, o, 1, 1)
        parents.append(bias)

    def backward(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        gx = gw = gb = None
        if weight.requires_grad:
            gw = (gmat.T @ cols).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 2, 3))
        if x.requires_grad:
            gcols = (gmat @ wmat).reshape(n, ho, wo, c, kh, kw)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + sh * (ho - 1) + 1:sh, j:j + sw * (wo - 1) + 1:sw] += (
                        gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                    )
            gx = gxp[:, :, ph:ph + h, pw:pw + w]
        return (gx, gw) if bias is None else (gx, gw, gb)

    return make_node(np.ascontiguousarray(out), parents, backward, "conv2d")


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of (N, C, L) input with (O, C, K) weights."""
    if x.ndim != 3 or weight.ndim != 3 or x.shape[1] != weight.shape[1]:
        raise ValueError(f"conv1d: incompatible shapes {x.shape} and {weight.shape}")
    n, c, length = x.shape
    o, _, k = weight.shape
    x4 = reshape(x, (n, c, 1, length))
    w4 = reshape(weight, (o, c, 1, k))
    y = conv2d(x4, w4, bias, stride=(1, stride), padding=(0, padding))
    return reshape(y, (n, o, y.shape[-1]))


# ---------------------------------------------------------------- pooling

def _pool_blocks(x: np.ndarray, kh: int, kw: int):
    n, c, h, w = x.shape
    ho, wo = h // kh, w // kw
    if ho == 0 or wo == 0:
        raise ValueError(f"pool: window ({kh}, {kw}) larger than input {x.shape}")
    crop = x[:, :, :ho * kh, :wo * kw]
    blocks = crop.reshape(n, c, ho, kh, wo, kw).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, kh * kw)
    return blocks, ho, wo


def _unpool(gblocks: np.ndarray, shape, kh: int, kw: int) -> np.ndarray:
    n, c, h, w = shape
    ho, wo = gblocks.shape[2], gblocks.shape[3]
    full = np.zeros(shape, dtype=gblocks.dtype)
    full[:, :, :ho * kh, :wo * kw] = (
        gblocks.reshape(n, c, ho, wo, kh, kw).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho * kh, wo * kw)
    )
    return full


def max_pool2d(x: Tensor, size) -> Tensor:
    """Non-overlapping max pooling; trailing rows/cols that do not fill a window are dropped."""
    kh, kw = _as_pair(size)
    blocks, ho, wo = _pool_blocks(x.data, kh, kw)
    idx = blocks.argmax(axis=-1)[..., None]
    out = np.take_along_axis(blocks, idx, axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, idx, g[..., None], axis=-1)
        return (_unpool(gb, x.shape, kh, kw),)

    return make_node(out, (x,), backward, "max_pool2d")


def avg_pool2d(x: Tensor, size) -> Tensor:
    kh, kw = _as_pair(size)
    blocks, ho, wo = _pool_blocks(x.data, kh, kw)
    out = blocks.mean(axis=-1)
    scale = x.dtype.type(1.0 / (kh * kw))

    def backward(g):
        gb = np.broadcast_to((g * scale)[..., None], blocks.shape)
        return (_unpool(gb, x.shape, kh, kw),)

    return make_node(out, (x,), backward, "avg_pool2d")


def max_pool1d(x: Tensor, size: int) -> Tensor:
    n, c, length = x.shape
    y = max_pool2d(reshape(x, (n, c, 1, length)), (1, size))
    return reshape(y, (n, c, y.shape[-1]))


def avg_pool1d(x: Tensor, size: int) -> Tensor:
    n, c, length = x.shape
    y = avg_pool2d(reshape(x, (n, c, 1, length)), (1, size))
    return reshape(y, (n, c, y.shape[-1]))


__all__ = [
    "add", "sub", "mul", "div", "relu", "sigmoid", "tanh", "exp", "log", "square",
    "sum", "mean", "softmax", "log_softmax", "matmul", "reshape", "transpose",
    "getitem", "concatenate", "stack", "frame", "dft_real", "dft_imag", "power_spectrum", "dft_basis",
    "conv2d", "conv1d", "max_pool2d", "avg_pool2d", "max_pool1d", "avg_pool1d",
]
