"""Train/test bookkeeping around ``AudioClassifier.fit``."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..audio_io import DatasetManifest, Waveform
from .classifier import AudioClassifier


@dataclass
class TrainingReport:
    model: str
    train_accuracy: float
    test_accuracy: float
    initial_loss: float
    loss_history: list[float] = field(default_factory=list)

    def rows(self) -> list[tuple[str, str, float]]:
        return [(self.model, "train", self.train_accuracy), (self.model, "test", self.test_accuracy)]


def split_arrays(manifest: DatasetManifest, waves: Sequence[Waveform], split: str):
    if len(waves) != len(manifest.entries):
        raise ValueError(f"{len(waves)} waveforms for {len(manifest.entries)} manifest entries")
    idx = [i for i, e in enumerate(manifest.entries) if e.split == split]
    if not idx:
        raise ValueError(f"{split} split is empty")
    X = np.stack([waves[i].samples for i in idx])
    y = np.array([manifest.entries[i].class_id for i in idx], dtype=np.int64)
    return X, y


def train(model: AudioClassifier, manifest: DatasetManifest, waves: Sequence[Waveform],
          epochs: int | None = None, lr: float | None = None, seed: int | None = None,
          name: str | None = None) -> tuple[AudioClassifier, TrainingReport]:
    """Fit on the train split and score both splits."""
    if manifest.n_classes and manifest.n_classes != model.n_classes:
        raise ValueError(f"dataset has {manifest.n_classes} classes, model expects {model.n_classes}")
    updates = {k: v for k, v in (("epochs", epochs), ("learning_rate", lr), ("random_state", seed)) if v is not None}
    model.set_params(**updates)
    X_train, y_train = split_arrays(manifest, waves, "train")
    X_test, y_test = split_arrays(manifest, waves, "test")
    model.fit(X_train, y_train)
    report = TrainingReport(
        name or model.arch,
        float(model.score(X_train, y_train)),
        float(model.score(X_test, y_test)),
        model.initial_loss_,
        list(model.history_),
    )
    model.train_accuracy_ = report.train_accuracy
    model.test_accuracy_ = report.test_accuracy
    return model, report


def accuracy_csv(reports: Sequence[TrainingReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["model", "split", "accuracy"])
    for r in reports:
        for row in r.rows():
            writer.writerow([row[0], row[1], f"{row[2]:.6f}"])
    return buf.getvalue()
