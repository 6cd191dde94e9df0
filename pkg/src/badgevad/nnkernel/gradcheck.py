"""Central finite-difference verification of layer backward passes."""
from __future__ import annotations

from collections.abc import Callable

import numpy as np

from .layers import Layer, MaxPool1D, ReLU, Sequential

KINK_MARGIN = 1e-4


def _near_kink(layer, x: np.ndarray) -> bool:
    if isinstance(layer, ReLU):
        return bool(np.any(np.abs(x) < KINK_MARGIN))
    if isinstance(layer, MaxPool1D):
        B, T, C = x.shape
        t2 = T // layer.pool
        win = np.sort(x[:, :t2 * layer.pool].reshape(B, t2, layer.pool, C), axis=2)
        # a ±h perturbation must not change which element wins
        return bool(np.any(win[:, :, -1] - win[:, :, -2] < KINK_MARGIN))
    return False


def grad_check(layer: Layer | Sequential, input_shape: tuple[int, ...],
               rng: np.random.Generator, h: float = 1e-5,
               max_coords: int | None = None,
               near_kink: Callable[[np.ndarray], bool] | None = None,
               max_resample: int = 50) -> float:
    """Compare analytic and numeric gradients of ``sum(forward(x) * g)``.

    Every element of the input and of every parameter is perturbed unless
    ``max_coords`` is given, in which case that many coordinates per tensor
    are sampled.  Returns ``max |analytic - numeric| / max(1, |numeric|)``.
    Inputs that land within 1e-4 of a ReLU or max-pool kink are redrawn.
    """
    near_kink = near_kink or (lambda x: _near_kink(layer, x))
    for _ in range(max_resample):
        x = rng.standard_normal(input_shape)
        if not near_kink(x):
            break
    else:
        raise RuntimeError("could not draw an input away from non-differentiable points")

    out = layer.forward(x, train=True)
    g = rng.standard_normal(out.shape)
    params = layer.params
    for p in params:
        p.zero_grad()
    dx = layer.backward(g)
    tensors = [(x, dx)] + [(p.value, p.grad.copy()) for p in params]

    def loss() -> float:
        return float(np.sum(layer.forward(x, train=True) * g))

    worst = 0.0
    for arr, analytic in tensors:
        flat, aflat = arr.reshape(-1), analytic.reshape(-1)
        if max_coords is not None and flat.size > max_coords:
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        else:
            coords = range(flat.size)
        for k in coords:
            orig = flat[k]
            flat[k] = orig + h
            up = loss()
            flat[k] = orig - h
            down = loss()
            flat[k] = orig
            numeric = (up - down) / (2.0 * h)
            err = abs(aflat[k] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    for p in params:
        p.zero_grad()
    return worst
