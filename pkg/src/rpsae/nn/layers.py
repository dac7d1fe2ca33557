"""Layers operating on ``(batch, length, channels)`` arrays with hand-written backward passes.

Every layer caches what its backward pass needs during ``forward``; calling
``backward`` accumulates parameter gradients into ``grads`` and returns the
gradient with respect to the layer input.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _uniform(rng, shape, fan_in):
    s = fan_in ** -0.5
    return rng.uniform(-s, s, size=shape)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class Layer:
    kind = ""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def _add(self, name, value):
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)

    def zero_grad(self):
        for g in self.grads.values():
            g[...] = 0.0

    def config(self) -> dict:
        raise NotImplementedError

    def output_length(self, length: int) -> int:
        return length

    def forward(self, x):
        raise NotImplementedError

    def backward(self, g):
        raise NotImplementedError


class Conv1D(Layer):
    """Stride-1 convolution with 'same' padding (left pad ``(K-1)//2``)."""

    kind = "conv1d"

    def __init__(self, in_channels, filters, kernel, rng=None, stride=1, same=True):
        super().__init__()
        if stride != 1 or not same:
            raise ValueError("only stride-1 same-padded convolutions are supported")
        if min(in_channels, filters, kernel) < 1:
            raise ValueError("layer sizes must be positive")
        self.in_channels, self.filters, self.kernel = in_channels, filters, kernel
        rng = rng or np.random.default_rng(0)
        self._add("W", _uniform(rng, (kernel, in_channels, filters), kernel * in_channels))
        self._add("b", np.zeros(filters))

    def config(self):
        return {"type": self.kind, "in_channels": self.in_channels, "filters": self.filters,
                "kernel": self.kernel, "stride": 1, "same": True}

    def forward(self, x):
        N, T, C = x.shape
        K = self.kernel
        left = (K - 1) // 2
        xp = np.pad(x, ((0, 0), (left, K - 1 - left), (0, 0)))
        cols = sliding_window_view(xp, K, axis=1)  # (N, T, C, K)
        cols = np.ascontiguousarray(cols.transpose(0, 1, 3, 2)).reshape(N * T, K * C)
        self._cache = (x.shape, cols)
        out = cols @ self.params["W"].reshape(K * C, self.filters) + self.params["b"]
        return out.reshape(N, T, self.filters)

    def backward(self, g):
        (N, T, C), cols = self._cache
        K, F = self.kernel, self.filters
        g2 = g.reshape(N * T, F)
        self.grads["W"] += (cols.T @ g2).reshape(K, C, F)
        self.grads["b"] += g2.sum(axis=0)
        dcols = (g2 @ self.params["W"].reshape(K * C, F).T).reshape(N, T, K, C)
        dxp = np.zeros((N, T + K - 1, C))
        for k in range(K):
            dxp[:, k:k + T] += dcols[:, :, k]
        left = (K - 1) // 2
        return dxp[:, left:left + T]


class MaxPool1D(Layer):
    """Non-overlapping max pooling; a ragged tail forms one shorter window."""

    kind = "maxpool1d"

    def __init__(self, pool, rng=None):
        super().__init__()
        if pool < 1:
            raise ValueError("pool must be >= 1")
        self.pool = pool

    def config(self):
        return {"type": self.kind, "pool": self.pool}

    def output_length(self, length):
        return math.ceil(length / self.pool)

    def forward(self, x):
        N, T, C = x.shape
        P = self.pool
        Tp = self.output_length(T)
        xp = np.full((N, Tp * P, C), -np.inf)
        xp[:, :T] = x
        windows = xp.reshape(N, Tp, P, C)
        arg = windows.argmax(axis=2)  # first maximal index on ties
        self._cache = (x.shape, arg)
        return np.take_along_axis(windows, arg[:, :, None, :], axis=2)[:, :, 0, :]

    def backward(self, g):
        (N, T, C), arg = self._cache
        P = self.pool
        Tp = arg.shape[1]
        dx = np.zeros((N, Tp, P, C))
        np.put_along_axis(dx, arg[:, :, None, :], g[:, :, None, :], axis=2)
        return dx.reshape(N, Tp * P, C)[:, :T]


class Dense(Layer):
    """Per-timestep affine map."""

    kind = "dense"

    def __init__(self, in_features, units, rng=None):
        super().__init__()
        if min(in_features, units) < 1:
            raise ValueError("layer sizes must be positive")
        self.in_features, self.units = in_features, units
        rng = rng or np.random.default_rng(0)
        self._add("W", _uniform(rng, (in_features, units), in_features))
        self._add("b", np.zeros(units))

    def config(self):
        return {"type": self.kind, "in_features": self.in_features, "units": self.units}

    def forward(self, x):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, g):
        x = self._x
        x2 = x.reshape(-1, self.in_features)
        g2 = g.reshape(-1, self.units)
        self.grads["W"] += x2.T @ g2
        self.grads["b"] += g2.sum(axis=0)
        return g @ self.params["W"].T


class BiLSTM(Layer):
    """Bidirectional LSTM returning the full sequence ``[h_forward, h_backward]``.

    Gate order inside the stacked weights is input, forget, cell, output.
    """

    kind = "bilstm"

    def __init__(self, in_features, units, rng=None):
        super().__init__()
        if min(in_features, units) < 1:
            raise ValueError("layer sizes must be positive")
        self.in_features, self.units = in_features, units
        rng = rng or np.random.default_rng(0)
        for d in ("f", "b"):
            self._add(f"W_{d}", _uniform(rng, (in_features, 4 * units), in_features))
            self._add(f"U_{d}", _uniform(rng, (units, 4 * units), units))
            self._add(f"b_{d}", np.zeros(4 * units))

    def config(self):
        return {"type": self.kind, "in_features": self.in_features, "units": self.units,
                "return_sequences": True}

    def _run(self, x, d):
        N, T, _ = x.shape
        U = self.units
        W, Uh, b = self.params[f"W_{d}"], self.params[f"U_{d}"], self.params[f"b_{d}"]
        xw = x @ W + b
        h = np.zeros((N, U))
        c = np.zeros((N, U))
        hs = np.empty((N, T, U))
        cache = []
        for t in range(T):
            z = xw[:, t] + h @ Uh
            i = _sigmoid(z[:, :U])
            f = _sigmoid(z[:, U:2 * U])
            gg = np.tanh(z[:, 2 * U:3 * U])
            o = _sigmoid(z[:, 3 * U:])
            c_prev, h_prev = c, h
            c = f * c_prev + i * gg
            tc = np.tanh(c)
            h = o * tc
            hs[:, t] = h
            cache.append((i, f, gg, o, c_prev, tc, h_prev))
        return hs, cache

    def _back(self, x, cache, dhs, d):
        N, T, _ = x.shape
        U = self.units
        W, Uh = self.params[f"W_{d}"], self.params[f"U_{d}"]
        dxw = np.empty((N, T, 4 * U))
        dh_next = np.zeros((N, U))
        dc_next = np.zeros((N, U))
        dU = self.grads[f"U_{d}"]
        for t in range(T - 1, -1, -1):
            i, f, gg, o, c_prev, tc, h_prev = cache[t]
            dh = dhs[:, t] + dh_next
            do = dh * tc
            dc = dh * o * (1 - tc * tc) + dc_next
            dz = np.concatenate([dc * gg * i * (1 - i), dc * c_prev * f * (1 - f),
                                 dc * i * (1 - gg * gg), do * o * (1 - o)], axis=1)
            dc_next = dc * f
            dU += h_prev.T @ dz
            dh_next = dz @ Uh.T
            dxw[:, t] = dz
        dxw2 = dxw.reshape(N * T, 4 * U)
        self.grads[f"W_{d}"] += x.reshape(N * T, -1).T @ dxw2
        self.grads[f"b_{d}"] += dxw2.sum(axis=0)
        return dxw @ W.T

    def forward(self, x):
        xr = x[:, ::-1]
        hf, cf = self._run(x, "f")
        hb, cb = self._run(xr, "b")
        self._cache = (x, xr, cf, cb)
        return np.concatenate([hf, hb[:, ::-1]], axis=2)

    def backward(self, g):
        x, xr, cf, cb = self._cache
        U = self.units
        dx = self._back(x, cf, g[:, :, :U], "f")
        dxr = self._back(xr, cb, g[:, ::-1, U:], "b")
        return dx + dxr[:, ::-1]


class UpSample1D(Layer):
    """Repeat every timestep ``factor`` times."""

    kind = "upsample1d"

    def __init__(self, factor, rng=None):
        super().__init__()
        if factor < 1:
            raise ValueError("factor must be >= 1")
        self.factor = factor

    def config(self):
        return {"type": self.kind, "factor": self.factor}

    def output_length(self, length):
        return length * self.factor

    def forward(self, x):
        return np.repeat(x, self.factor, axis=1)

    def backward(self, g):
        N, T, C = g.shape
        return g.reshape(N, T // self.factor, self.factor, C).sum(axis=2)


class Crop1D(Layer):
    """Keep the first ``length`` timesteps (undoes ceil pooling after upsampling)."""

    kind = "crop1d"

    def __init__(self, length, rng=None):
        super().__init__()
        self.length = length

    def config(self):
        return {"type": self.kind, "length": self.length}

    def output_length(self, length):
        if length < self.length:
            raise ValueError(f"cannot crop length {length} to {self.length}")
        return self.length

    def forward(self, x):
        self._T = x.shape[1]
        if self._T < self.length:
            raise ValueError(f"cannot crop length {self._T} to {self.length}")
        return x[:, :self.length]

    def backward(self, g):
        N, _, C = g.shape
        dx = np.zeros((N, self._T, C))
        dx[:, :self.length] = g
        return dx


class Deconv1D(Layer):
    """Transposed convolution with 'same' output length ``T * stride``."""

    kind = "deconv1d"

    def __init__(self, in_channels, filters, kernel, rng=None, stride=1):
        super().__init__()
        if min(in_channels, filters, kernel, stride) < 1 or kernel < stride:
            raise ValueError("need positive sizes and kernel >= stride")
        self.in_channels, self.filters, self.kernel, self.stride = in_channels, filters, kernel, stride
        rng = rng or np.random.default_rng(0)
        self._add("W", _uniform(rng, (kernel, in_channels, filters), kernel * in_channels))
        self._add("b", np.zeros(filters))

    def config(self):
        return {"type": self.kind, "in_channels": self.in_channels, "filters": self.filters,
                "kernel": self.kernel, "stride": self.stride}

    def output_length(self, length):
        return length * self.stride

    def _geometry(self, T):
        K, s = self.kernel, self.stride
        full = (T - 1) * s + K
        left = (K - s) // 2
        return full, left

    def forward(self, x):
        N, T, _ = x.shape
        K, s, F = self.kernel, self.stride, self.filters
        full, left = self._geometry(T)
        W = self.params["W"]
        y = np.zeros((N, full, F))
        for j in range(K):
            y[:, j:j + s * (T - 1) + 1:s] += x @ W[j]
        self._x = x
        return y[:, left:left + T * s] + self.params["b"]

    def backward(self, g):
        x = self._x
        N, T, C = x.shape
        K, s, F = self.kernel, self.stride, self.filters
        full, left = self._geometry(T)
        gf = np.zeros((N, full, F))
        gf[:, left:left + T * s] = g
        W = self.params["W"]
        x2 = x.reshape(N * T, C)
        dx = np.zeros_like(x)
        for j in range(K):
            gj = gf[:, j:j + s * (T - 1) + 1:s]
            self.grads["W"][j] += x2.T @ gj.reshape(N * T, F)
            dx += gj @ W[j].T
        self.grads["b"] += g.reshape(-1, F).sum(axis=0)
        return dx


LAYER_TYPES = {cls.kind: cls for cls in (Conv1D, MaxPool1D, Dense, BiLSTM, UpSample1D, Crop1D, Deconv1D)}


def layer_from_config(cfg: dict, rng=None) -> Layer:
    cfg = dict(cfg)
    cls = LAYER_TYPES[cfg.pop("type")]
    cfg.pop("return_sequences", None)
    return cls(**cfg, rng=rng)
