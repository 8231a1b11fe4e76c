"""WAV encoding/decoding, resampling and the synthetic sound-event corpus."""
from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from math import gcd
from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np

DEFAULT_RATE = 32000

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_IEEE_FLOAT = 0x0003
WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class WavError(ValueError):
    code = "wav_error"


class MalformedWavError(WavError):
    code = "malformed"


class UnsupportedEncodingError(WavError):
    code = "unsupported_encoding"


class MultichannelError(WavError):
    code = "multichannel"


@dataclass(frozen=True, eq=False)
class Waveform:
    """Mono audio samples with their sample rate.

    Samples are nominally in [-1, 1]; :meth:`clamp` enforces it.
    """

    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.dtype.kind != "f":
            s = s.astype(np.float64)
        if s.ndim != 1 or s.size < 1:
            raise ValueError(f"waveform samples must be a non-empty 1-D array, got shape {s.shape}")
        if not np.isfinite(s).all():
            raise ValueError("waveform contains non-finite samples")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate}")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def clamp(self) -> "Waveform":
        return Waveform(np.clip(self.samples, -1.0, 1.0), self.sample_rate, self.source_id)

    def with_samples(self, samples) -> "Waveform":
        return Waveform(samples, self.sample_rate, self.source_id)


# --------------------------------------------------------------------- WAV

def _read_bytes(stream) -> bytes:
    if isinstance(stream, (bytes, bytearray, memoryview)):
        return bytes(stream)
    return stream.read()


def read_wav(stream: bytes | BinaryIO, source_id: str = "") -> Waveform:
    """Decode a mono RIFF/WAVE stream (PCM16 or float32)."""
    data = _read_bytes(stream)
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedWavError("missing RIFF/WAVE header")
    pos = 12
    fmt = None
    payload = None
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body_start = pos + 8
        body_end = body_start + size
        if body_end > len(data):
            raise MalformedWavError(
                f"chunk {chunk_id!r} declares {size} bytes but only {len(data) - body_start} remain"
            )
        body = data[body_start:body_end]
        if chunk_id == b"fmt ":
            if size < 16:
                raise MalformedWavError("fmt chunk too short")
            fmt = struct.unpack("<HHIIHH", body[:16])
            if fmt[0] == WAVE_FORMAT_EXTENSIBLE:
                if size < 40:
                    raise MalformedWavError("extensible fmt chunk too short")
                (sub,) = struct.unpack("<H", body[24:26])
                fmt = (sub,) + fmt[1:]
        elif chunk_id == b"data":
            payload = body
        pos = body_end + (size & 1)
    if fmt is None or payload is None:
        raise MalformedWavError("stream lacks a fmt or data chunk")

    tag, channels, rate, _, block_align, bits = fmt
    if channels != 1:
        raise MultichannelError(f"expected mono audio, got {channels} channels")
    if tag == WAVE_FORMAT_PCM and bits == 16:
        samples = np.frombuffer(payload[: len(payload) // 2 * 2], dtype="<i2").astype(np.float64) / 32768.0
    elif tag == WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        samples = np.frombuffer(payload[: len(payload) // 4 * 4], dtype="<f4").astype(np.float32)
    else:
        raise UnsupportedEncodingError(f"unsupported encoding: format tag {tag:#06x}, {bits} bits")
    if rate == 0:
        raise MalformedWavError("sample rate is zero")
    if samples.size == 0:
        raise MalformedWavError("data chunk holds no samples")
    return Waveform(samples, rate, source_id)


def write_wav(w: Waveform, encoding: str = "pcm16") -> bytes:
    """Encode as RIFF/WAVE; samples are clamped to [-1, 1] first."""
    s = np.clip(w.samples, -1.0, 1.0)
    if encoding == "pcm16":
        body = np.round(s * 32767.0).astype("<i2").tobytes()
        tag, bits = WAVE_FORMAT_PCM, 16
    elif encoding == "float32":
        body = s.astype("<f4").tobytes()
        tag, bits = WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise ValueError(f"unknown encoding {encoding!r}; use 'pcm16' or 'float32'")
    block_align = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, w.sample_rate, w.sample_rate * block_align, block_align, bits)
    out = io.BytesIO()
    out.write(b"RIFF")
    out.write(struct.pack("<I", 4 + (8 + len(fmt)) + (8 + len(body))))
    out.write(b"WAVE")
    out.write(b"fmt " + struct.pack("<I", len(fmt)) + fmt)
    out.write(b"data" + struct.pack("<I", len(body)) + body)
    return out.getvalue()


def load_wav(path) -> Waveform:
    path = Path(path)
    return read_wav(path.read_bytes(), source_id=path.stem)


def save_wav(path, w: Waveform, encoding: str = "pcm16") -> None:
    Path(path).write_bytes(write_wav(w, encoding))


# --------------------------------------------------------------------- resampling

RESAMPLE_TAPS = 32


def _resample_kernel(frac: np.ndarray, taps: int, cutoff: float, halfwidth: float) -> np.ndarray:
    # frac: fractional offsets in [0, 1); returns (len(frac), taps) Hann-windowed sinc weights
    offsets = np.arange(taps) - (taps // 2 - 1)
    tau = offsets[None, :] - frac[:, None]  # source-sample distance
    h = cutoff * np.sinc(cutoff * tau)
    window = 0.5 + 0.5 * np.cos(np.pi * np.clip(tau / halfwidth, -1.0, 1.0))
    h = h * window
    return h / h.sum(axis=1, keepdims=True)


def resample(w: Waveform, target_rate: int) -> Waveform:
    """Band-limited polyphase resampling with a Hann-windowed sinc.

    The kernel spans 32 taps of the lower of the two rates.
    """
    if target_rate is None or int(target_rate) <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    target_rate = int(target_rate)
    src = w.sample_rate
    if target_rate == src:
        return Waveform(w.samples.copy(), src, w.source_id)
    g = gcd(src, target_rate)
    up, down = target_rate // g, src // g
    n_out = int(round(w.samples.size * target_rate / src))
    cutoff = min(1.0, target_rate / src)
    taps = int(np.ceil(RESAMPLE_TAPS / cutoff))
    taps += taps % 2
    halfwidth = taps / 2.0

    # output n sits at source position n * down / up; phases repeat every `up` outputs
    phase = (np.arange(up) * down) % up
    kernels = _resample_kernel(phase / up, taps, cutoff, halfwidth)
    n = np.arange(n_out)
    base = (n * down) // up
    offsets = np.arange(taps) - (taps // 2 - 1)
    pad = taps
    x = np.pad(w.samples.astype(np.float64), (pad, pad))
    idx = base[:, None] + offsets[None, :] + pad
    out = np.einsum("ij,ij->i", x[idx], kernels[n % up])
    return Waveform(out.astype(w.samples.dtype, copy=False), target_rate, w.source_id)


# --------------------------------------------------------------------- synthetic corpus

GENERATOR_KINDS = ("harmonic", "noise_burst", "chirp", "am_tone", "fm_tone", "filtered_noise")


@dataclass(frozen=True)
class SynthClassSpec:
    """Recipe for one synthetic sound class.

    ``f0_range`` is the fundamental (tonal kinds) or the pass band
    (``filtered_noise``) in Hz; ``decay_range`` is an exponential decay time
    in seconds; ``mod_rate_range`` drives AM/FM/envelope modulation in Hz.
    """

    name: str
    kind: str
    f0_range: tuple[float, float]
    decay_range: tuple[float, float] = (0.2, 0.6)
    mod_rate_range: tuple[float, float] = (4.0, 7.0)
    duration: float = 1.0
    odd_harmonics: bool = False
    n_harmonics: int = 8
    brightness: float = 1.0

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        for label, (lo, hi) in (("f0_range", self.f0_range), ("decay_range", self.decay_range),
                                ("mod_rate_range", self.mod_rate_range)):
            if not lo <= hi:
                raise ValueError(f"{label} is empty: {(lo, hi)}")
        if self.duration <= 0:
            raise ValueError(f"duration must be positive, got {self.duration}")


def default_class_specs() -> list[SynthClassSpec]:
    """Eight classes: two percussive, four harmonic, two noise-like.

    The first six stand in for a bass drum / snare / cello / violin /
    clarinet / oboe music subset.
    """
    return [
        SynthClassSpec("bass_drum", "chirp", (45.0, 70.0), decay_range=(0.15, 0.35)),
        SynthClassSpec("snare_drum", "noise_burst", (170.0, 230.0), decay_range=(0.08, 0.2)),
        SynthClassSpec("cello", "harmonic", (70.0, 180.0), n_harmonics=12, brightness=0.8),
        SynthClassSpec("violin", "fm_tone", (400.0, 900.0), mod_rate_range=(5.0, 7.0), n_harmonics=8, brightness=0.9),
        SynthClassSpec("clarinet", "harmonic", (180.0, 400.0), odd_harmonics=True, n_harmonics=9, brightness=1.2),
        SynthClassSpec("oboe", "am_tone", (400.0, 800.0), mod_rate_range=(8.0, 14.0), n_harmonics=6, brightness=1.6),
        SynthClassSpec("wind", "filtered_noise", (200.0, 900.0), mod_rate_range=(0.5, 2.0)),
        SynthClassSpec("hiss", "filtered_noise", (5000.0, 11000.0), mod_rate_range=(0.5, 2.0)),
    ]


def _harmonic_stack(phase: np.ndarray, spec: SynthClassSpec, rng: np.random.Generator, f0: float,
                    rate: int) -> np.ndarray:
    out = np.zeros_like(phase)
    step = 2 if spec.odd_harmonics else 1
    for i, h in enumerate(range(1, step * spec.n_harmonics + 1, step)):
        if h * f0 >= 0.45 * rate:
            break
        amp = h ** (-1.0 / spec.brightness) * rng.uniform(0.7, 1.0)
        out += amp * np.sin(h * phase + rng.uniform(0, 2 * np.pi) * (i > 0))
    return out


def _envelope(t: np.ndarray, onset: float, attack: float, release: float, duration: float) -> np.ndarray:
    env = np.clip((t - onset) / attack, 0.0, 1.0)
    tail = np.clip((duration - t) / release, 0.0, 1.0)
    return env * tail


def _band_noise(rng, n, rate, lo, hi):
    spec = np.fft.rfft(rng.normal(size=n))
    freqs = np.fft.rfftfreq(n, 1.0 / rate)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    return np.fft.irfft(spec, n=n)


def synthesize_clip(spec: SynthClassSpec, rng: np.random.Generator, sample_rate: int = DEFAULT_RATE,
                    noise_floor: bool = True) -> np.ndarray:
    """Render one clip for ``spec``; peak-normalised to 0.9."""
    n = int(round(spec.duration * sample_rate))
    t = np.arange(n) / sample_rate
    f0 = rng.uniform(*spec.f0_range)
    decay = rng.uniform(*spec.decay_range)
    mod = rng.uniform(*spec.mod_rate_range)
    kind = spec.kind

    if kind in ("harmonic", "am_tone", "fm_tone"):
        onset = rng.uniform(0.0, 0.15 * spec.duration)
        if kind == "fm_tone":
            depth = rng.uniform(0.01, 0.03)
            inst = f0 * (1.0 + depth * np.sin(2 * np.pi * mod * t))
            phase = 2 * np.pi * np.cumsum(inst) / sample_rate
        else:
            phase = 2 * np.pi * f0 * t
        x = _harmonic_stack(phase, spec, rng, f0, sample_rate)
        if kind == "am_tone":
            x *= 1.0 + 0.8 * np.sin(2 * np.pi * mod * t + rng.uniform(0, 2 * np.pi))
        x *= _envelope(t, onset, rng.uniform(0.02, 0.08), 0.05, spec.duration)
    elif kind == "chirp":
        onset = rng.uniform(0.0, 0.4 * spec.duration)
        local = np.clip(t - onset, 0.0, None)
        inst = f0 + 3.0 * f0 * np.exp(-local / 0.04)
        phase = 2 * np.pi * np.cumsum(inst) / sample_rate
        x = np.sin(phase) * np.exp(-local / decay) * (t >= onset)
        click = rng.normal(size=n) * np.exp(-local / 0.005) * (t >= onset)
        x += 0.3 * click
    elif kind == "noise_burst":
        onset = rng.uniform(0.0, 0.4 * spec.duration)
        local = np.clip(t - onset, 0.0, None)
        gate = (t >= onset) * np.exp(-local / decay)
        body = np.sin(2 * np.pi * f0 * local) * np.exp(-local / (0.5 * decay))
        x = gate * (0.8 * rng.normal(size=n)) + 0.6 * body * (t >= onset)
    else:  # filtered_noise
        lo, hi = spec.f0_range
        x = _band_noise(rng, n, sample_rate, lo, hi)
        x *= 1.0 + 0.5 * np.sin(2 * np.pi * mod * t + rng.uniform(0, 2 * np.pi))

    peak = np.abs(x).max()
    if peak > 0:
        x = x / peak
    if noise_floor:
        level = 10 ** (rng.uniform(-55.0, -40.0) / 20.0)
        x = x + level * rng.normal(size=n)
    peak = np.abs(x).max()
    return 0.9 * x / peak if peak > 0 else x


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    class_id: int
    split: str


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        k = len(self.class_names)
        for e in self.entries:
            if e.split not in ("train", "test"):
                raise ValueError(f"bad split {e.split!r} for {e.path}")
            if k and not 0 <= e.class_id < k:
                raise ValueError(f"class_id {e.class_id} out of range for {k} classes")
        train = {e.path for e in self.entries if e.split == "train"}
        test = {e.path for e in self.entries if e.split == "test"}
        if train & test:
            raise ValueError("train and test splits overlap")

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["path", "class_id", "split"])
        for e in self.entries:
            writer.writerow([e.path, e.class_id, e.split])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, class_names: Sequence[str] = ()) -> "DatasetManifest":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header != ["path", "class_id", "split"]:
            raise ValueError(f"manifest header must be path,class_id,split; got {header}")
        entries = [ManifestEntry(row[0], int(row[1]), row[2]) for row in reader if row]
        names = list(class_names) or [str(i) for i in range(max(e.class_id for e in entries) + 1)]
        return cls(entries, names)


def synthesize_dataset(specs: Sequence[SynthClassSpec], per_class: int, seed: int,
                       sample_rate: int = DEFAULT_RATE) -> tuple[DatasetManifest, list[Waveform]]:
    """Deterministic corpus with an 80/20 train/test split per class.

    Every clip draws from its own stream seeded by (seed, class, index), so
    the result is a pure function of the arguments.
    """
    if not specs:
        raise ValueError("synthesize_dataset needs at least one class spec")
    if per_class < 2:
        raise ValueError(f"per_class must be >= 2 to fill both splits, got {per_class}")
    n_test = min(per_class - 1, max(1, int(round(0.2 * per_class))))
    entries, waves = [], []
    for class_id, spec in enumerate(specs):
        for i in range(per_class):
            rng = np.random.default_rng([seed, class_id, i])
            samples = synthesize_clip(spec, rng, sample_rate).astype(np.float32)
            path = f"{spec.name}/{spec.name}_{i:03d}.wav"
            split = "test" if i >= per_class - n_test else "train"
            entries.append(ManifestEntry(path, class_id, split))
            waves.append(Waveform(samples, sample_rate, source_id=path))
    return DatasetManifest(entries, [s.name for s in specs]), waves
