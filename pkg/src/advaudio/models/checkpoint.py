"""Versioned little-endian binary checkpoints.

Layout: magic ``ADVAUDIO``, u16 version, u8-prefixed architecture name,
u16 n_classes, u32 seed, u32-prefixed JSON metadata (estimator params and
training results), u32 parameter count, then per parameter a u16-prefixed
name, u8 ndim, u32 dims and float32 values.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .classifier import AudioClassifier

MAGIC = b"ADVAUDIO"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _metadata(model: AudioClassifier) -> dict:
    params = model.get_params()
    meta = {"params": params}
    for key in ("train_accuracy_", "test_accuracy_"):
        if hasattr(model, key):
            meta[key] = float(getattr(model, key))
    return meta


def model_to_bytes(model: AudioClassifier) -> bytes:
    net = model.network_
    arch = model.arch.encode("ascii")
    meta = json.dumps(_metadata(model), sort_keys=True, separators=(",", ":")).encode("utf-8")
    out = [MAGIC, struct.pack("<H", VERSION), struct.pack("<B", len(arch)), arch,
           struct.pack("<HI", model.n_classes, int(model.random_state) & 0xFFFFFFFF),
           struct.pack("<I", len(meta)), meta, struct.pack("<I", len(net.params))]
    for name, t in net.params.items():
        raw = name.encode("ascii")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<B", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape))
        out.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    return b"".join(out)


def model_from_bytes(blob: bytes) -> AudioClassifier:
    view = memoryview(blob)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("truncated checkpoint")
        chunk = bytes(view[pos:pos + n])
        pos += n
        return chunk

    if take(8) != MAGIC:
        raise CheckpointError("not an advaudio checkpoint")
    (version,) = struct.unpack("<H", take(2))
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (alen,) = struct.unpack("<B", take(1))
    arch = take(alen).decode("ascii")
    n_classes, seed = struct.unpack("<HI", take(6))
    (mlen,) = struct.unpack("<I", take(4))
    meta = json.loads(take(mlen).decode("utf-8"))
    params = meta["params"]
    if params.get("network_params"):
        params["network_params"] = {
            k: tuple(v) if isinstance(v, list) else v for k, v in params["network_params"].items()
        }
    if params["arch"] != arch or params["n_classes"] != n_classes:
        raise CheckpointError("header and metadata disagree")
    model = AudioClassifier(**params).initialize()
    (count,) = struct.unpack("<I", take(4))
    if count != len(model.network_.params):
        raise CheckpointError(f"expected {len(model.network_.params)} parameter arrays, found {count}")
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("ascii")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        values = np.frombuffer(take(4 * int(np.prod(shape, dtype=np.int64))), dtype="<f4").reshape(shape)
        target = model.network_.params.get(name)
        if target is None or target.shape != tuple(shape):
            raise CheckpointError(f"parameter {name} with shape {shape} does not fit {arch}")
        target.data = values.astype(target.dtype)
    for key in ("train_accuracy_", "test_accuracy_"):
        if key in meta:
            setattr(model, key, meta[key])
    return model


def save_checkpoint(model: AudioClassifier, path) -> None:
    Path(path).write_bytes(model_to_bytes(model))


def load_checkpoint(path) -> AudioClassifier:
    return model_from_bytes(Path(path).read_bytes())
