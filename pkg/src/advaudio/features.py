"""Differentiable logmel frontend.

frame -> Hann window -> one-sided DFT power (re^2 + im^2) ->
mel matmul -> log(. + eps) -> divide by max-abs. The max-abs constant (and
the optional waveform standardisation statistics) are computed in the
forward pass and treated as constants by backward.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .audio_io import Waveform
from .diffgraph import Tensor, ops


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate: int = 32000
    window_size: int = 1024
    hop: int = 512
    n_mels: int = 64
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.sample_rate <= 0 or self.window_size <= 0 or self.hop <= 0:
            raise ValueError("sample_rate, window_size and hop must be positive")
        if self.hop > self.window_size:
            raise ValueError(f"hop {self.hop} exceeds window_size {self.window_size}")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")
        if not 1 <= self.n_mels <= self.window_size // 2 + 1:
            raise ValueError(f"n_mels={self.n_mels} too large for a {self.window_size}-point FFT")

    @property
    def n_bins(self) -> int:
        return self.window_size // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        return (n_samples - self.window_size) // self.hop + 1


@dataclass(frozen=True)
class FrozenStats:
    """Per-example constants that backward does not differentiate through.

    Arrays carry a leading batch axis.
    """

    norm_constant: np.ndarray
    mean: np.ndarray | None = None
    std: np.ndarray | None = None


@dataclass
class LogmelSpectrogram:
    values: np.ndarray  # frames x n_mels
    norm_constant: float
    config: FrontendConfig


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(config: FrontendConfig = FrontendConfig()) -> np.ndarray:
    """Triangular HTK-mel filters from 0 Hz to Nyquist, shape (n_mels, window/2 + 1)."""
    n_mels = config.n_mels
    if n_mels > config.n_bins:
        raise ValueError(f"n_mels={n_mels} too large for a {config.window_size}-point FFT")
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(config.sample_rate / 2.0), n_mels + 2))
    freqs = np.arange(config.n_bins) * config.sample_rate / config.window_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    up = (freqs[None, :] - lo) / (mid - lo)
    down = (hi - freqs[None, :]) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(up, down))
    empty = np.flatnonzero(fb.sum(axis=1) <= 0)
    if empty.size:
        raise ValueError(
            f"n_mels={n_mels} too large for a {config.window_size}-point FFT: filters {empty.tolist()} are empty"
        )
    return fb


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


class LogmelFrontend(BaseEstimator, TransformerMixin):
    """Waveforms (n, m) -> normalised logmel images (n, frames, n_mels).

    ``standardize=True`` applies per-example zero-mean/unit-variance scaling
    to the waveform before the spectrogram.
    """

    def __init__(self, sample_rate=32000, window_size=1024, hop=512, n_mels=64,
                 log_floor=1e-10, standardize=False):
        self.sample_rate = sample_rate
        self.window_size = window_size
        self.hop = hop
        self.n_mels = n_mels
        self.log_floor = log_floor
        self.standardize = standardize

    @property
    def config(self) -> FrontendConfig:
        return FrontendConfig(self.sample_rate, self.window_size, self.hop, self.n_mels, self.log_floor)

    def _constants(self, dtype):
        key = (self.config, np.dtype(dtype).str)
        cache = self.__dict__.setdefault("_cache", {})
        if key not in cache:
            cfg = self.config
            cache[key] = (
                hann_window(cfg.window_size).astype(dtype),
                mel_filterbank(cfg).T.astype(dtype).copy(),
            )
        return cache[key]

    def fit(self, X=None, y=None):
        self.config  # validates parameters
        return self

    def graph(self, x: Tensor, frozen: FrozenStats | None = None) -> tuple[Tensor, FrozenStats]:
        """Build the differentiable pipeline for a (n, m) waveform tensor."""
        cfg = self.config
        if x.ndim != 2:
            raise ValueError(f"expected (n, m) waveforms, got shape {x.shape}")
        if x.shape[1] < cfg.window_size:
            raise ValueError(f"clip of {x.shape[1]} samples is shorter than one window ({cfg.window_size})")
        window, melT = self._constants(x.dtype)
        mean = std = None
        if self.standardize:
            if frozen is None:
                mean = x.data.mean(axis=1, keepdims=True)
                std = x.data.std(axis=1, keepdims=True) + x.dtype.type(1e-5)
            else:
                mean, std = frozen.mean, frozen.std
            x = ops.div(ops.sub(x, Tensor(mean)), Tensor(std))
        frames = ops.mul(ops.frame(x, cfg.window_size, cfg.hop), Tensor(window))
        power = ops.power_spectrum(frames)
        logmel = ops.log(ops.matmul(power, Tensor(melT)), eps=cfg.log_floor)
        if frozen is None:
            norm = np.abs(logmel.data).max(axis=(1, 2), keepdims=True)
            norm = np.where(norm > 0, norm, 1.0).astype(x.dtype)
        else:
            norm = frozen.norm_constant
        out = ops.div(logmel, Tensor(norm))
        return out, FrozenStats(norm, mean, std)

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X)
        if X.ndim == 1:
            X = X[None, :]
        dtype = X.dtype if X.dtype.kind == "f" else np.float64
        chunks = []
        for start in range(0, X.shape[0], 64):
            out, _ = self.graph(Tensor(X[start:start + 64].astype(dtype, copy=False)))
            chunks.append(out.data)
        return np.concatenate(chunks, axis=0)


def logmel_forward(w: Waveform, config: FrontendConfig = FrontendConfig(), standardize: bool = False
                   ) -> LogmelSpectrogram:
    if w.sample_rate != config.sample_rate:
        raise ValueError(f"waveform at {w.sample_rate} Hz, frontend expects {config.sample_rate} Hz")
    front = LogmelFrontend(config.sample_rate, config.window_size, config.hop, config.n_mels,
                           config.log_floor, standardize)
    out, stats = front.graph(Tensor(w.samples[None, :]))
    return LogmelSpectrogram(out.data[0], float(stats.norm_constant.ravel()[0]), config)


def spectrogram_to_pgm(values: np.ndarray) -> bytes:
    """8-bit binary PGM, low mel bands at the bottom, time left to right."""
    img = np.asarray(values, dtype=np.float64).T[::-1]
    lo, hi = img.min(), img.max()
    scaled = np.zeros_like(img) if hi == lo else (img - lo) / (hi - lo)
    pixels = np.round(scaled * 255).astype(np.uint8)
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes()


__all__ = [
    "FrontendConfig", "FrozenStats", "LogmelSpectrogram", "LogmelFrontend", "mel_filterbank",
    "logmel_forward", "spectrogram_to_pgm", "hz_to_mel", "mel_to_hz", "hann_window",
]
