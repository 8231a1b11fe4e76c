"""Attack result container and the shared finalisation step."""
from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ..audio_io import Waveform
from ..metrics import UndefinedSNRError, snr_db


class AttackAborted(RuntimeError):
    """Optimisation produced a non-finite objective."""

    def __init__(self, attack: str, iteration: int):
        super().__init__(f"{attack}: non-finite loss at iteration {iteration}")
        self.iteration = iteration


@dataclass
class AttackResult:
    attack: str
    model: str
    source_id: str
    original_label: int
    adversarial: Waveform
    perturbation: np.ndarray
    success: bool
    new_label: int
    conf_new: float
    conf_gt_new: float
    conf_gt: float
    snr_db: float
    iterations_used: int
    target_label: int | None = None
    zero_gradient: bool = False

    @property
    def targeted(self) -> bool:
        return self.target_label is not None

    @property
    def zero_perturbation(self) -> bool:
        return not np.any(self.perturbation)

    @property
    def original(self) -> np.ndarray:
        return self.adversarial.samples - self.perturbation


def storage_dtype(model) -> np.dtype:
    # adversaries are stored at the model's working precision so the stored
    # waveform is exactly the input the attack evaluated
    return np.dtype(getattr(model, "dtype", None) or np.float64)


def model_name(model) -> str:
    return str(getattr(model, "name", None) or getattr(model, "arch", None) or type(model).__name__)


def probabilities(model, x: np.ndarray) -> np.ndarray:
    return np.asarray(model.predict_proba(x[None, :]), dtype=np.float64)[0]


def is_success(label: int, original: int, target: int | None) -> bool:
    return label == target if target is not None else label != original


class Attack(BaseEstimator):
    """Common plumbing: input coercion, label bookkeeping and finalisation."""

    name = "attack"
    supports_untargeted = True
    supports_target = False

    def _prepare(self, model, w, label, target):
        if isinstance(w, Waveform):
            rate = getattr(model, "sample_rate", None)
            if rate is not None and w.sample_rate != rate:
                raise ValueError(f"waveform at {w.sample_rate} Hz; model expects {rate} Hz")
            x, sr, source = w.samples.astype(np.float64), w.sample_rate, w.source_id
        else:
            x = np.asarray(w, dtype=np.float64).reshape(-1)
            sr, source = int(getattr(model, "sample_rate", 1) or 1), ""
        if not np.isfinite(x).all():
            raise ValueError("input contains non-finite samples")
        if not np.any(x):
            raise UndefinedSNRError("cannot attack a silent input: SNR is undefined")
        k = int(model.n_classes)
        p_clean = probabilities(model, x)
        if label is None:
            label = int(np.argmax(p_clean))
        if not 0 <= int(label) < k:
            raise ValueError(f"label {label} outside [0, {k})")
        if target is not None:
            if not self.supports_target:
                raise ValueError(f"{self.name} is untargeted")
            if not 0 <= int(target) < k:
                raise ValueError(f"target {target} outside [0, {k})")
            target = int(target)
        elif not self.supports_untargeted:
            raise ValueError(f"{self.name} needs a target class")
        return x, sr, source, int(label), target, p_clean

    def _finalize(self, model, x, x_adv, sr, source, label, target, p_clean, iterations, zero_gradient=False):
        adv = np.clip(x_adv, -1.0, 1.0).astype(storage_dtype(model)).astype(np.float64)
        r = adv - x
        p_adv = probabilities(model, adv)
        new = int(np.argmax(p_adv))
        return AttackResult(
            attack=self.name,
            model=model_name(model),
            source_id=source,
            original_label=label,
            adversarial=Waveform(adv, sr, source),
            perturbation=r,
            success=is_success(new, label, target),
            new_label=new,
            conf_new=float(p_adv[new]),
            conf_gt_new=float(p_adv[label]),
            conf_gt=float(p_clean[label]),
            snr_db=snr_db(x, r),
            iterations_used=int(iterations),
            target_label=target,
            zero_gradient=zero_gradient,
        )

    def _check(self):
        """Raise ValueError on invalid hyperparameters."""

    def validate(self) -> "Attack":
        self._check()
        return self

    def run(self, model, w, label: int | None = None, target: int | None = None) -> AttackResult:
        raise NotImplementedError

    def __call__(self, model, w, label=None, target=None) -> AttackResult:
        return self.run(model, w, label, target)


def seeded_rng(random_state: int, source_id: str) -> np.random.Generator:
    """Per-input generator so results do not depend on execution order."""
    return np.random.default_rng([int(random_state), zlib.crc32(source_id.encode("utf-8"))])
