"""Multiclass DeepFool on the logit surrogate."""
from __future__ import annotations

import numpy as np

from .base import Attack


class DeepFool(Attack):
    """Iterative linearisation toward the nearest decision boundary.

    Each step moves to the closest linearised boundary between the original
    class and any other class; the accumulated perturbation is scaled by
    (1 + overshoot).
    """

    name = "deepfool"

    def __init__(self, max_iter=50, overshoot=0.02):
        self.max_iter = max_iter
        self.overshoot = overshoot

    def _check(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.overshoot < 0:
            raise ValueError("overshoot must be non-negative")

    def run(self, model, w, label=None, target=None):
        self._check()
        x, sr, source, label, target, p_clean = self._prepare(model, w, label, target)
        if int(np.argmax(p_clean)) != label:
            return self._finalize(model, x, x, sr, source, label, target, p_clean, 0)
        r_tot = np.zeros_like(x)
        xi = x
        used = 0
        for _ in range(self.max_iter):
            z, _, J = model.logit_jacobian(xi)
            if int(np.argmax(z)) != label:
                break
            used += 1
            W = J - J[label]
            f = z - z[label]
            norms = np.linalg.norm(W, axis=1)
            dist = np.full(len(z), np.inf)
            ok = norms > 0
            dist[ok] = np.abs(f[ok]) / norms[ok]
            dist[label] = np.inf
            j = int(np.argmin(dist))
            if not np.isfinite(dist[j]):
                break  # flat logits: nothing to follow
            r_tot = r_tot + (dist[j] + 1e-4) * W[j] / norms[j]
            xi = np.clip(x + (1.0 + self.overshoot) * r_tot, -1.0, 1.0)
        adv = x + (1.0 + self.overshoot) * r_tot
        return self._finalize(model, x, adv, sr, source, label, target, p_clean, used)
