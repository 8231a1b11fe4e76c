"""Box-constrained L-BFGS minimiser and the targeted L-BFGS attack."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..models.losses import CrossEntropy
from .base import Attack, AttackAborted, is_success


@dataclass
class LBFGSResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool


def lbfgs_box(fun_grad: Callable[[np.ndarray], tuple[float, np.ndarray]], x0, lower=-np.inf, upper=np.inf,
              memory: int = 10, max_iter: int = 100, tol: float = 1e-8, ftol: float = 2.2e-9,
              max_backtracks: int = 30,
              callback: Callable[[np.ndarray, float], bool] | None = None) -> LBFGSResult:
    """Projected two-loop L-BFGS with Armijo backtracking.

    Coordinates pinned at a bound with the gradient pushing outward are
    frozen for the step. Stops when the projected gradient is below ``tol``
    or the relative decrease of f falls below ``ftol``. ``callback(x, f)``
    returning True also stops early.
    """
    if memory < 1 or max_iter < 0:
        raise ValueError("memory must be >= 1 and max_iter >= 0")
    lower = np.broadcast_to(np.asarray(lower, dtype=np.float64), np.shape(x0))
    upper = np.broadcast_to(np.asarray(upper, dtype=np.float64), np.shape(x0))
    if np.any(lower > upper):
        raise ValueError("lower bound exceeds upper bound")
    x = np.clip(np.asarray(x0, dtype=np.float64), lower, upper)
    f, g = fun_grad(x)
    evals = 1
    pairs: deque = deque(maxlen=memory)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        pg = x - np.clip(x - g, lower, upper)
        if np.max(np.abs(pg), initial=0.0) <= tol:
            converged = True
            it -= 1
            break
        free = ~(((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0)))
        q = np.where(free, g, 0.0)
        alphas = []
        for s, y, rho in reversed(pairs):
            a = rho * (s[free] @ q[free])
            alphas.append(a)
            q[free] -= a * y[free]
        if pairs:
            s, y, _ = pairs[-1]
            yy = y[free] @ y[free]
            gamma = (s[free] @ y[free]) / yy if yy > 0 else 1.0
            if gamma <= 0:
                gamma = 1.0
        else:
            gamma = min(1.0, 1.0 / max(np.linalg.norm(g[free]), 1e-12))
        q *= gamma
        for (s, y, rho), a in zip(pairs, reversed(alphas)):
            b = rho * (y[free] @ q[free])
            q[free] += (a - b) * s[free]
        d = np.where(free, -q, 0.0)
        if d @ g >= 0:  # not a descent direction: fall back to steepest descent
            d = np.where(free, -g, 0.0) * gamma
            pairs.clear()
        step = 1.0
        for _ in range(max_backtracks):
            x_new = np.clip(x + step * d, lower, upper)
            f_new, g_new = fun_grad(x_new)
            evals += 1
            if np.isfinite(f_new) and f_new <= f + 1e-4 * (g @ (x_new - x)):
                break
            step *= 0.5
        else:
            break  # no acceptable step: stationary to working precision
        s, y = x_new - x, g_new - g
        sy = s @ y
        if sy > 1e-12 * max(1.0, np.sqrt((s @ s) * (y @ y))):
            pairs.append((s, y, 1.0 / sy))
        decrease = f - f_new
        x, f, g = x_new, f_new, g_new
        if decrease <= ftol * max(abs(f), abs(f + decrease), 1.0):
            converged = True
            break
        if callback is not None and callback(x, f):
            break
    return LBFGSResult(x, float(f), it, evals, converged)


class LBFGSAttack(Attack):
    """Targeted attack minimising c*||x' - x||^2 + CE(D(x'), t) over x' in [-1, 1].

    c starts at ``c_init`` and doubles while the minimiser still reaches the
    target; the last successful adversary (smallest distortion) is kept.
    Each outer step warm-starts from the previous solution.
    """

    name = "lbfgs"
    supports_untargeted = False
    supports_target = True

    def __init__(self, max_outer_steps=20, c_init=1e-3, inner_iterations=25, memory=10):
        self.max_outer_steps = max_outer_steps
        self.c_init = c_init
        self.inner_iterations = inner_iterations
        self.memory = memory

    def _check(self):
        if self.max_outer_steps < 1 or self.inner_iterations < 1 or self.c_init <= 0 or self.memory < 1:
            raise ValueError("max_outer_steps, inner_iterations, memory and c_init must be positive")

    def run(self, model, w, label=None, target=None):
        if target is None:
            raise ValueError("lbfgs is a targeted attack: give a target class")
        self._check()
        x, sr, source, label, target, p_clean = self._prepare(model, w, label, target)
        if int(np.argmax(p_clean)) == target:
            raise ValueError(f"target {target} equals the current label")
        loss = CrossEntropy(target)
        used = 0
        c = float(self.c_init)
        start = x
        best = None
        last = x

        for _ in range(self.max_outer_steps):
            def fun_grad(xp, c=c):
                nonlocal used
                used += 1
                ce, g = model.input_gradient(xp, loss)
                r = xp - x
                f = c * float(r @ r) + float(ce)
                if not np.isfinite(f):
                    raise AttackAborted(self.name, used)
                return f, 2.0 * c * r + np.asarray(g, dtype=np.float64).reshape(x.shape)

            res = lbfgs_box(fun_grad, start, -1.0, 1.0, memory=self.memory, max_iter=self.inner_iterations)
            last = res.x
            label_now = int(np.argmax(model.predict_proba(res.x[None, :])[0]))
            if not is_success(label_now, label, target):
                break
            best = res.x
            start = res.x
            c *= 2.0

        adv = best if best is not None else last
        return self._finalize(model, x, adv, sr, source, label, target, p_clean, used)
