"""Loss and optimizer."""
from __future__ import annotations

from collections.abc import Iterable

import numpy as np

from .layers import Parameter

PROB_CLIP = 1e-7


def _check_lengths(p, y, w):
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if not (p.shape == y.shape == w.shape) or p.ndim != 1:
        raise ValueError(
            f"probabilities, labels and weights must be 1-D of equal length, "
            f"got {p.shape}, {y.shape}, {w.shape}")
    return p, y, w


def weighted_bce(p, y, w) -> float:
    """Weighted mean binary cross-entropy, ``sum(w * bce) / sum(w)``."""
    p, y, w = _check_lengths(p, y, w)
    pc = np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)
    per = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    return float(np.sum(w * per) / np.sum(w))


def weighted_bce_grad(p, y, w) -> np.ndarray:
    """Gradient of :func:`weighted_bce` with respect to ``p``.

    Zero where the clip is active, matching the derivative of the clipped loss.
    """
    p, y, w = _check_lengths(p, y, w)
    pc = np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)
    g = w * (-y / pc + (1.0 - y) / (1.0 - pc)) / np.sum(w)
    g[(p < PROB_CLIP) | (p > 1.0 - PROB_CLIP)] = 0.0
    return g


class Adam:
    """Bias-corrected adaptive-moment optimizer acting in place."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps

    def step(self, params: Iterable[Parameter], t: int) -> None:
        if t < 1:
            raise ValueError(f"step index must be >= 1, got {t}")
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** t
        c2 = 1.0 - b2 ** t
        for p in params:
            g = p.grad
            p.m *= b1
            p.m += (1.0 - b1) * g
            p.v *= b2
            p.v += (1.0 - b2) * g * g
            p.value -= self.lr * (p.m / c1) / (np.sqrt(p.v / c2) + self.eps)
            p.zero_grad()


def adam_step(params: Iterable[Parameter], lr: float, t: int) -> None:
    Adam(lr).step(params, t)
