from __future__ import annotations

import copy
import json
import struct
from pathlib import Path

import numpy as np

from .layers import (BiLSTM, Conv1D, Crop1D, Deconv1D, Dense, Layer, MaxPool1D, UpSample1D,
                     layer_from_config)

FORMAT_VERSION = 1
_MAGIC = b"RPSNET\x00\x01"


class Network:
    """An ordered layer stack; the first ``n_encoder`` layers form the encoder."""

    def __init__(self, layers: list[Layer], n_encoder: int | None = None, seed: int = 0,
                 input_length: int | None = None):
        self.layers = list(layers)
        self.n_encoder = len(self.layers) if n_encoder is None else n_encoder
        self.seed = seed
        self.input_length = input_length

    # -- evaluation
    def _run(self, layers, x):
        for layer in layers:
            x = layer.forward(x)
        return x

    def forward(self, x):
        return self._run(self.layers, x)

    def backward(self, g):
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def encoder_forward(self, x):
        return self._run(self.layers[:self.n_encoder], x)

    def decoder_forward(self, z):
        return self._run(self.layers[self.n_encoder:], z)

    def encoder_backward(self, g):
        for layer in reversed(self.layers[:self.n_encoder]):
            g = layer.backward(g)
        return g

    def decoder_backward(self, g):
        for layer in reversed(self.layers[self.n_encoder:]):
            g = layer.backward(g)
        return g

    def encode(self, x2d):
        """``(p, d)`` rows to ``(p, latent)`` codes."""
        return self.encoder_forward(np.asarray(x2d, dtype=float)[:, :, None])[:, :, 0]

    def decode(self, z2d):
        return self.decoder_forward(np.asarray(z2d, dtype=float)[:, :, None])[:, :, 0]

    def reconstruct(self, x2d):
        return self.decode(self.encode(x2d))

    def latent_length(self, length: int | None = None) -> int:
        length = self.input_length if length is None else length
        for layer in self.layers[:self.n_encoder]:
            length = layer.output_length(length)
        return length

    # -- parameters
    def parameters(self):
        """``(layer index, name, array, grad)`` in a fixed order."""
        out = []
        for li, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                out.append((li, name, layer.params[name], layer.grads[name]))
        return out

    def n_parameters(self) -> int:
        return sum(p.size for _, _, p, _ in self.parameters())

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def gradient_vector(self):
        return np.concatenate([g.ravel() for *_, g in self.parameters()]) if self.parameters() else np.zeros(0)

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def config(self) -> dict:
        return {"layers": [layer.config() for layer in self.layers], "n_encoder": self.n_encoder,
                "seed": self.seed, "input_length": self.input_length}


def build_autoencoder(length: int, k: int, filters: int = 50, kernel: int = 10, lstm_units: int = 50,
                      seed: int = 0) -> Network:
    """Conv-pool-BiLSTM encoder and dense-upsample-deconv decoder for 1-channel sequences.

    Latent length is ``ceil(length / k)``; the decoder crops back to ``length``.
    """
    rng = np.random.default_rng(seed)
    enc = [
        Conv1D(1, filters, kernel, rng),
        MaxPool1D(k),
        BiLSTM(filters, lstm_units, rng),
        Dense(2 * lstm_units, 1, rng),
    ]
    dec = [
        Dense(1, filters, rng),
        UpSample1D(k),
        Crop1D(length),
        Deconv1D(filters, 1, kernel, rng),
    ]
    return Network(enc + dec, n_encoder=len(enc), seed=seed, input_length=length)


def reconstruction_loss(net: Network, x2d) -> float:
    """Mean over rows of the squared L2 reconstruction error."""
    x2d = np.asarray(x2d, dtype=float)
    r = net.reconstruct(x2d) - x2d
    return float((r * r).sum() / x2d.shape[0])


def _target_for(net: Network, x):
    out = net.forward(x)
    if out.shape == x.shape:
        return x
    return np.random.default_rng(12345).standard_normal(out.shape)


def _loss_and_grad(net: Network, x, target):
    net.zero_grad()
    out = net.forward(x)
    r = out - target
    p = x.shape[0]
    net.backward(2.0 * r / p)
    return float((r * r).sum() / p)


def grad_check(net: Network, x, eps: float = 1e-5) -> float:
    """Max relative error between backprop and central differences over all parameters.

    The probe loss is ``(1/p) * ||net(x) - x||^2`` when the output matches the
    input shape, otherwise the same form against a fixed random target.
    """
    if not eps > 0:
        raise ValueError("eps must be > 0")
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        x = x[:, :, None]
    target = _target_for(net, x)
    _loss_and_grad(net, x, target)
    analytic = [g.copy() for *_, g in net.parameters()]
    worst = 0.0
    for (_, _, param, _), a in zip(net.parameters(), analytic):
        flat = param.reshape(-1)
        ga = a.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            lp = _loss_and_grad(net, x, target)
            flat[i] = old - eps
            lm = _loss_and_grad(net, x, target)
            flat[i] = old
            num = (lp - lm) / (2 * eps)
            err = abs(ga[i] - num) / max(1e-8, abs(ga[i]) + abs(num))
            worst = max(worst, err)
    net.zero_grad()
    return worst


# ---------------------------------------------------------------- serialization


def save_network(net: Network, path, extra: dict | None = None) -> Path:
    """Single binary file: magic, header length, JSON header, raw little-endian float64 data."""
    path = Path(path)
    params = net.parameters()
    header = {
        "format_version": FORMAT_VERSION,
        "network": net.config(),
        "tensors": [{"layer": li, "name": name, "shape": list(p.shape)} for li, name, p, _ in params],
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with path.open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for *_, p, _ in params:
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return path


def load_network(path) -> tuple[Network, dict]:
    data = Path(path).read_bytes()
    if data[:len(_MAGIC)] != _MAGIC:
        raise ValueError(f"{path} is not a network file")
    (hlen,) = struct.unpack("<Q", data[len(_MAGIC):len(_MAGIC) + 8])
    start = len(_MAGIC) + 8
    header = json.loads(data[start:start + hlen])
    if header["format_version"] != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {header['format_version']}")
    cfg = header["network"]
    layers = [layer_from_config(lc) for lc in cfg["layers"]]
    net = Network(layers, cfg["n_encoder"], cfg["seed"], cfg["input_length"])
    offset = start + hlen
    for t in header["tensors"]:
        arr = net.layers[t["layer"]].params[t["name"]]
        if list(arr.shape) != t["shape"]:
            raise ValueError(f"tensor shape mismatch for layer {t['layer']} {t['name']}")
        nbytes = arr.size * 8
        arr[...] = np.frombuffer(data[offset:offset + nbytes], dtype="<f8").reshape(arr.shape)
        offset += nbytes
    return net, header["extra"]
