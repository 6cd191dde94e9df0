"""Stateless wrappers around the layers for single, unbatched inputs.

These take ``(T, C)`` arrays (one sequence) and explicit weights, which is the
convenient form for checking a layer against a hand computation.
"""
from __future__ import annotations

import numpy as np

from .layers import (LSTM, Conv1DSame, GlobalAvgPool, MaxPool1D, ShapeError,
                     sigmoid as _sigmoid)


def _single(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected a (T, C) array, got shape {x.shape}")
    return x[None]


def conv1d_same(x, weights, bias) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weights.ndim != 3:
        raise ShapeError("conv weights must be (K, Cin, Cout)")
    K, cin, cout = weights.shape
    if bias.shape != (cout,):
        raise ShapeError(f"bias must have shape ({cout},)")
    layer = Conv1DSame("conv", cin, cout, K, np.random.default_rng(0))
    layer.weight.value[...] = weights
    layer.bias.value[...] = bias
    return layer.forward(_single(x))[0]


def relu(x) -> np.ndarray:
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def sigmoid(x) -> np.ndarray:
    return _sigmoid(np.asarray(x, dtype=np.float64))


def maxpool1d(x, pool: int = 2) -> np.ndarray:
    return MaxPool1D(pool).forward(_single(x))[0]


def global_avg_pool(x) -> np.ndarray:
    return GlobalAvgPool().forward(_single(x))[0]


def dense(x, weights, bias) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if x.ndim != 1 or weights.ndim != 2 or weights.shape[0] != x.shape[0] \
            or bias.shape != (weights.shape[1],):
        raise ShapeError(
            f"dense shapes disagree: x {x.shape}, weights {weights.shape}, bias {bias.shape}")
    return x @ weights + bias


def lstm_layer(x, kernel, recurrent_kernel, bias, return_sequences: bool = False) -> np.ndarray:
    """Run one LSTM over a ``(T, Cin)`` sequence from zero initial state."""
    kernel = np.asarray(kernel, dtype=np.float64)
    recurrent_kernel = np.asarray(recurrent_kernel, dtype=np.float64)
    cin, four_h = kernel.shape
    H = four_h // 4
    if four_h != 4 * H or recurrent_kernel.shape != (H, 4 * H) or np.shape(bias) != (4 * H,):
        raise ShapeError("inconsistent LSTM parameter shapes")
    layer = LSTM("lstm", cin, H, return_sequences, np.random.default_rng(0))
    layer.kernel.value[...] = kernel
    layer.recurrent.value[...] = recurrent_kernel
    layer.bias.value[...] = bias
    return layer.forward(_single(x))[0]
