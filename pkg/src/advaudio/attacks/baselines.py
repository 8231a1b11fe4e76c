"""White-noise baseline and the fast gradient sign method."""
from __future__ import annotations

import numpy as np

from ..models.losses import CrossEntropy
from .base import Attack, seeded_rng


class WhiteNoise(Attack):
    """Gaussian noise rescaled to an exact pre-clamp SNR.

    Keeps the first draw that changes the label, else the last draw.
    """

    name = "white_noise"

    def __init__(self, snr_db=20.0, max_draws=1, random_state=0):
        self.snr_db = snr_db
        self.max_draws = max_draws
        self.random_state = random_state

    def _check(self):
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if self.max_draws < 1:
            raise ValueError("max_draws must be >= 1")

    def run(self, model, w, label=None, target=None):
        self._check()
        x, sr, source, label, target, p_clean = self._prepare(model, w, label, target)
        rng = seeded_rng(self.random_state, source)
        power = np.sum(x * x) / 10.0 ** (self.snr_db / 10.0)
        for draw in range(1, self.max_draws + 1):
            noise = rng.standard_normal(x.shape)
            adv = x + noise * np.sqrt(power / np.sum(noise * noise))
            result = self._finalize(model, x, adv, sr, source, label, target, p_clean, draw)
            if result.success:
                break
        return result


class FGSM(Attack):
    """Single step r = eps * sign(grad_x CE(D(x), y)).

    ``epsilon`` is in amplitude units. Setting ``target_snr_db`` instead
    picks eps = rms(x) * 10^(-snr/20), which hits that SNR exactly when the
    gradient has no zero entries.
    """

    name = "fgsm"

    def __init__(self, epsilon=0.01, target_snr_db=None):
        self.epsilon = epsilon
        self.target_snr_db = target_snr_db

    def _check(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.target_snr_db is not None and not np.isfinite(self.target_snr_db):
            raise ValueError("target_snr_db must be finite")

    def step_size(self, x: np.ndarray) -> float:
        self._check()
        if self.target_snr_db is not None:
            return float(np.sqrt(np.mean(x * x)) * 10.0 ** (-self.target_snr_db / 20.0))
        return float(self.epsilon)

    def run(self, model, w, label=None, target=None):
        x, sr, source, label, target, p_clean = self._prepare(model, w, label, target)
        eps = self.step_size(x)
        _, grad = model.input_gradient(x, CrossEntropy(label))
        direction = np.sign(np.asarray(grad, dtype=np.float64).reshape(x.shape))
        zero = not direction.any()
        adv = x if zero or eps == 0 else x + eps * direction
        return self._finalize(model, x, adv, sr, source, label, target, p_clean, 1, zero_gradient=zero)
