"""Layers with explicit forward and backward passes.

Every layer consumes batched, time-major-last tensors of shape ``(B, T, C)``
(or ``(B, C)`` after pooling) in float64.  ``forward(x, train=True)`` caches
what ``backward`` needs; ``backward(grad)`` accumulates parameter gradients
into ``Parameter.grad`` and returns the gradient with respect to ``x``.

Inference (``train=False``) runs every matrix product per sample with an
identical BLAS call shape, so a sample's output does not depend on which other
samples share its batch.  Training uses one large product per layer instead,
which is faster but only reproducible for a fixed batch composition.
"""
from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    pass


class Parameter:
    """A trainable tensor with its gradient and optimizer moment slots."""

    __slots__ = ("name", "value", "grad", "m", "v")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self.m = np.zeros_like(self.value)
        self.v = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _matmul(x: np.ndarray, w: np.ndarray, exact: bool) -> np.ndarray:
    """``x @ w`` over the last axis of x.

    With ``exact`` each leading-axis slice gets its own product of identical
    shape, which makes results independent of the batch size.
    """
    if exact:
        if x.ndim == 2:
            return np.matmul(x[:, None, :], w)[:, 0, :]
        return np.matmul(x, w)
    lead = x.shape[:-1]
    return (x.reshape(-1, x.shape[-1]) @ w).reshape(*lead, w.shape[1])


def sigmoid(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


class Layer:
    params: list[Parameter] = []

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def state(self) -> dict[str, np.ndarray]:
        """Non-trainable arrays that must be serialized with the layer."""
        return {}


class Conv1DSame(Layer):
    """1-D cross-correlation with zero "same" padding.

    Weights have shape ``(K, Cin, Cout)``.  For even K the extra zero goes on
    the right: left pad ``(K-1)//2``, right pad ``K-1-left``.
    """

    def __init__(self, name: str, cin: int, cout: int, kernel: int, rng: np.random.Generator):
        if kernel < 1:
            raise ValueError("kernel size must be >= 1")
        self.cin, self.cout, self.kernel = cin, cout, kernel
        w = glorot_uniform(rng, (kernel, cin, cout), kernel * cin, kernel * cout)
        self.weight = Parameter(f"{name}.kernel", w)
        self.bias = Parameter(f"{name}.bias", np.zeros(cout))
        self.params = [self.weight, self.bias]
        self.pad_left = (kernel - 1) // 2
        self.pad_right = kernel - 1 - self.pad_left

    def _columns(self, x: np.ndarray) -> np.ndarray:
        T = x.shape[1]
        xp = np.pad(x, ((0, 0), (self.pad_left, self.pad_right), (0, 0)))
        return np.concatenate([xp[:, j:j + T, :] for j in range(self.kernel)], axis=2)

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[2] != self.cin:
            raise ShapeError(f"conv expects (B, T, {self.cin}), got {x.shape}")
        if x.shape[1] < 1:
            raise ShapeError("conv needs T >= 1")
        cols = self._columns(x)
        w2 = self.weight.value.reshape(self.kernel * self.cin, self.cout)
        out = _matmul(cols, w2, exact=not train) + self.bias.value
        if train:
            self._cols = cols
        return out

    def backward(self, grad):
        cols = self._cols
        B, T, _ = grad.shape
        kc = self.kernel * self.cin
        self.bias.grad += grad.sum(axis=(0, 1))
        self.weight.grad += (cols.reshape(-1, kc).T @ grad.reshape(-1, self.cout)).reshape(
            self.kernel, self.cin, self.cout)
        w2 = self.weight.value.reshape(kc, self.cout)
        dcols = (grad.reshape(-1, self.cout) @ w2.T).reshape(B, T, self.kernel, self.cin)
        dxp = np.zeros((B, T + self.kernel - 1, self.cin))
        for j in range(self.kernel):
            dxp[:, j:j + T, :] += dcols[:, :, j, :]
        return dxp[:, self.pad_left:self.pad_left + T, :]


class BatchNorm1D(Layer):
    """Per-channel batch normalization over the batch and time axes."""

    def __init__(self, name: str, channels: int, eps: float = 1e-3, momentum: float = 0.99):
        self.channels, self.eps, self.momentum = channels, eps, momentum
        self.gamma = Parameter(f"{name}.gamma", np.ones(channels))
        self.beta = Parameter(f"{name}.beta", np.zeros(channels))
        self.params = [self.gamma, self.beta]
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.initialized = False

    def forward(self, x, train=False):
        if x.shape[-1] != self.channels:
            raise ShapeError(f"batchnorm expects {self.channels} channels, got {x.shape[-1]}")
        axes = tuple(range(x.ndim - 1))
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean) * inv_std
            self._xhat, self._inv_std = xhat, inv_std
            m = self.momentum
            self.running_mean = m * self.running_mean + (1.0 - m) * mean
            self.running_var = m * self.running_var + (1.0 - m) * var
            self.initialized = True
        else:
            if not self.initialized:
                raise RuntimeError("uninitialized running statistics")
            xhat = (x - self.running_mean) / np.sqrt(self.running_var + self.eps)
        return self.gamma.value * xhat + self.beta.value

    def backward(self, grad):
        xhat, inv_std = self._xhat, self._inv_std
        axes = tuple(range(grad.ndim - 1))
        n = grad.size // grad.shape[-1]
        self.gamma.grad += (grad * xhat).sum(axis=axes)
        self.beta.grad += grad.sum(axis=axes)
        dxhat = grad * self.gamma.value
        return (inv_std / n) * (
            n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))

    def state(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}


class ReLU(Layer):
    def forward(self, x, train=False):
        if train:
            self._mask = x > 0
        return np.maximum(x, 0.0)

    def backward(self, grad):
        return grad * self._mask


class Sigmoid(Layer):
    def forward(self, x, train=False):
        y = sigmoid(x)
        if train:
            self._y = y
        return y

    def backward(self, grad):
        y = self._y
        return grad * y * (1.0 - y)


class MaxPool1D(Layer):
    """Non-overlapping max pooling over time; a trailing odd frame is dropped."""

    def __init__(self, pool: int = 2):
        self.pool = pool

    def forward(self, x, train=False):
        B, T, C = x.shape
        if T < self.pool:
            raise ShapeError(f"maxpool needs T >= {self.pool}, got {T}")
        t2 = T // self.pool
        win = x[:, :t2 * self.pool, :].reshape(B, t2, self.pool, C)
        if train:
            self._arg = win.argmax(axis=2)  # first maximum wins ties
            self._in_shape = x.shape
        return win.max(axis=2)

    def backward(self, grad):
        B, T, C = self._in_shape
        t2 = grad.shape[1]
        dwin = np.zeros((B, t2, self.pool, C))
        np.put_along_axis(dwin, self._arg[:, :, None, :], grad[:, :, None, :], axis=2)
        dx = np.zeros((B, T, C))
        dx[:, :t2 * self.pool, :] = dwin.reshape(B, t2 * self.pool, C)
        return dx


class GlobalAvgPool(Layer):
    def forward(self, x, train=False):
        if x.shape[1] < 1:
            raise ShapeError("global average pool needs T >= 1")
        if train:
            self._T = x.shape[1]
        return x.mean(axis=1)

    def backward(self, grad):
        return np.repeat(grad[:, None, :] / self._T, self._T, axis=1)


class Dense(Layer):
    def __init__(self, name: str, cin: int, cout: int, rng: np.random.Generator):
        self.cin, self.cout = cin, cout
        self.weight = Parameter(f"{name}.kernel", glorot_uniform(rng, (cin, cout), cin, cout))
        self.bias = Parameter(f"{name}.bias", np.zeros(cout))
        self.params = [self.weight, self.bias]

    def forward(self, x, train=False):
        if x.ndim != 2 or x.shape[1] != self.cin:
            raise ShapeError(f"dense expects (B, {self.cin}), got {x.shape}")
        if train:
            self._x = x
        return _matmul(x, self.weight.value, exact=not train) + self.bias.value

    def backward(self, grad):
        self.weight.grad += self._x.T @ grad
        self.bias.grad += grad.sum(axis=0)
        return grad @ self.weight.value.T


class LSTM(Layer):
    """Single LSTM layer, gate order (input, forget, candidate, output).

    ``kernel`` is ``(Cin, 4H)``, ``recurrent_kernel`` is ``(H, 4H)``.  Both use
    fan-based uniform init; the forget-gate bias starts at 1.
    """

    def __init__(self, name: str, cin: int, units: int, return_sequences: bool,
                 rng: np.random.Generator):
        self.cin, self.units, self.return_sequences = cin, units, return_sequences
        H = units
        self.kernel = Parameter(f"{name}.kernel", glorot_uniform(rng, (cin, 4 * H), cin, 4 * H))
        self.recurrent = Parameter(
            f"{name}.recurrent_kernel", glorot_uniform(rng, (H, 4 * H), H, 4 * H))
        bias = np.zeros(4 * H)
        bias[H:2 * H] = 1.0
        self.bias = Parameter(f"{name}.bias", bias)
        self.params = [self.kernel, self.recurrent, self.bias]

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[2] != self.cin:
            raise ShapeError(f"lstm expects (B, T, {self.cin}), got {x.shape}")
        B, T, _ = x.shape
        H = self.units
        exact = not train
        xw = _matmul(x, self.kernel.value, exact) + self.bias.value
        U = self.recurrent.value
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        hs = np.empty((B, T, H)) if (self.return_sequences or train) else None
        if train:
            gates = np.empty((T, 4, B, H))
            cs = np.empty((T + 1, B, H))
            cs[0] = c
        for t in range(T):
            z = xw[:, t, :] + _matmul(h, U, exact)
            i = sigmoid(z[:, :H])
            f = sigmoid(z[:, H:2 * H])
            g = np.tanh(z[:, 2 * H:3 * H])
            o = sigmoid(z[:, 3 * H:])
            c = f * c + i * g
            h = o * np.tanh(c)
            if hs is not None:
                hs[:, t, :] = h
            if train:
                gates[t, 0], gates[t, 1], gates[t, 2], gates[t, 3] = i, f, g, o
                cs[t + 1] = c
        if train:
            self._x, self._hs, self._gates, self._cs = x, hs, gates, cs
        return hs if self.return_sequences else h

    def backward(self, grad):
        x, hs, gates, cs = self._x, self._hs, self._gates, self._cs
        B, T, _ = x.shape
        H = self.units
        U = self.recurrent.value
        if self.return_sequences:
            dH = grad
        else:
            dH = np.zeros((B, T, H))
            dH[:, -1, :] = grad
        dz_all = np.empty((B, T, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        dU = np.zeros_like(U)
        for t in range(T - 1, -1, -1):
            i, f, g, o = gates[t]
            c, c_prev = cs[t + 1], cs[t]
            h_prev = hs[:, t - 1, :] if t > 0 else np.zeros((B, H))
            dh = dH[:, t, :] + dh_next
            tc = np.tanh(c)
            do = dh * tc
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz = dz_all[:, t, :]
            dz[:, :H] = dc * g * i * (1.0 - i)
            dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
            dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
            dz[:, 3 * H:] = do * o * (1.0 - o)
            dc_next = dc * f
            dU += h_prev.T @ dz
            dh_next = dz @ U.T
        self.recurrent.grad += dU
        self.kernel.grad += x.reshape(-1, self.cin).T @ dz_all.reshape(-1, 4 * H)
        self.bias.grad += dz_all.sum(axis=(0, 1))
        return (dz_all.reshape(-1, 4 * H) @ self.kernel.value.T).reshape(B, T, self.cin)


class Sequential:
    """A stack of layers; the network object held by a model."""

    def __init__(self, layers: list[Layer]):
        self.layers = layers

    @property
    def params(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.params]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()
