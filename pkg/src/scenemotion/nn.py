"""Dense networks with explicit reverse-mode gradients, Adam, VAE pieces.

Everything is plain numpy on float64. Layers are (out x in) weight matrices
with ELU, linear, or softmax activations; backward passes return gradient
arrays shaped like the parameters. Checkpoints are a one-line JSON manifest
followed by a raw little-endian float32 payload.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptHeader, DimMismatch, NonFiniteGradient


def elu(v: np.ndarray) -> np.ndarray:
    return np.where(v > 0, v, np.expm1(np.minimum(v, 0.0)))


def softmax(v: np.ndarray) -> np.ndarray:
    z = v - v.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


ACTIVATIONS = ("elu", "linear", "softmax")


@dataclass
class DenseLayer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    activation: str = "elu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise DimMismatch(f"layer shapes W{self.W.shape} b{self.b.shape} do not chain")


def glorot(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return rng.uniform(-limit, limit, size=(out_dim, in_dim))


@dataclass
class DenseNet:
    layers: list[DenseLayer]

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if b.W.shape[1] != a.W.shape[0]:
                raise DimMismatch(
                    f"layer output {a.W.shape[0]} feeds layer input {b.W.shape[1]}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].W.shape[0]

    @staticmethod
    def create(rng: np.random.Generator, in_dim: int, sizes: list[int],
               hidden_act: str = "elu", out_act: str = "linear") -> "DenseNet":
        layers = []
        prev = in_dim
        for i, size in enumerate(sizes):
            act = out_act if i == len(sizes) - 1 else hidden_act
            layers.append(DenseLayer(glorot(rng, size, prev), np.zeros(size), act))
            prev = size
        return DenseNet(layers)

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.forward_cached(x)[0]

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.in_dim:
            raise DimMismatch(f"input width {x.shape[-1]}, net expects {self.in_dim}")
        cache = []
        h = x
        for layer in self.layers:
            z = h @ layer.W.T + layer.b
            if layer.activation == "elu":
                y = elu(z)
            elif layer.activation == "softmax":
                y = softmax(z)
            else:
                y = z
            cache.append((h, z, y))
            h = y
        return h, cache

    def backward(self, cache: list, dy: np.ndarray) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
        """Gradients [(dW, db), ...] per layer plus dLoss/dx."""
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.layers)
        d = np.asarray(dy, dtype=float)
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            x_in, z, y = cache[idx]
            if layer.activation == "elu":
                dz = d * np.where(z > 0, 1.0, y + 1.0)
            elif layer.activation == "softmax":
                dz = y * (d - (d * y).sum(axis=-1, keepdims=True))
            else:
                dz = d
            flat_dz = dz.reshape(-1, dz.shape[-1])
            flat_x = x_in.reshape(-1, x_in.shape[-1])
            grads[idx] = (flat_dz.T @ flat_x, flat_dz.sum(axis=0))
            d = dz @ layer.W
        return grads, d

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.W, layer.b))
        return out


def kl_standard_normal(mu: np.ndarray, log_sigma: np.ndarray) -> np.ndarray:
    """KL(N(mu, diag sigma^2) || N(0, I)), summed over the last axis."""
    s2 = np.exp(2.0 * log_sigma)
    return 0.5 * (mu ** 2 + s2 - 1.0 - 2.0 * log_sigma).sum(axis=-1)


def kl_standard_normal_grad(mu: np.ndarray, log_sigma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return mu, np.exp(2.0 * log_sigma) - 1.0


def reparameterize(mu: np.ndarray, log_sigma: np.ndarray, eps: np.ndarray) -> np.ndarray:
    return mu + np.exp(log_sigma) * eps


class Adam:
    """Adam with a linearly decaying learning rate over a fixed epoch budget."""

    def __init__(self, params: list[np.ndarray], lr: float, total_epochs: int,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.total_epochs = total_epochs
        self.betas = betas
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def rate(self, epoch: int) -> float:
        return self.lr * max(0.0, 1.0 - epoch / self.total_epochs)

    def step(self, grads: list[np.ndarray], epoch: int) -> None:
        if len(grads) != len(self.params):
            raise DimMismatch(f"{len(grads)} gradients for {len(self.params)} parameters")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient("gradient contains nan or inf")
        b1, b2 = self.betas
        self.t += 1
        lr = self.rate(epoch)
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            p -= lr * mhat / (np.sqrt(vhat) + self.eps)


class GradAccumulator:
    """Sums per-step gradients shaped like a parameter list."""

    def __init__(self, params: list[np.ndarray]):
        self.total = [np.zeros_like(p) for p in params]

    def add(self, grads: list[np.ndarray], scale: float = 1.0) -> None:
        for t, g in zip(self.total, grads):
            t += scale * g

    def scaled(self, scale: float) -> list[np.ndarray]:
        return [t * scale for t in self.total]


def flatten_layer_grads(grads: list[tuple[np.ndarray, np.ndarray]]) -> list[np.ndarray]:
    out = []
    for dW, db in grads:
        out.extend((dW, db))
    return out


# ---------------------------------------------------------------------------
# checkpoint files: JSON manifest line + float32 payload


def save_checkpoint(path: str, meta: dict, named: list[tuple[str, np.ndarray]]) -> None:
    entries = [{"name": n, "shape": list(a.shape)} for n, a in named]
    header = dict(meta)
    header["arrays"] = entries
    payload = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for _, a in named)
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(json.dumps(header).encode() + b"\n")
        f.write(payload)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as f:
        line = f.readline()
        blob = f.read()
    try:
        header = json.loads(line.decode())
        entries = header.pop("arrays")
    except (ValueError, KeyError) as e:
        raise CorruptHeader(f"bad checkpoint manifest in {path}: {e}") from None
    arrays = {}
    off = 0
    for ent in entries:
        shape = tuple(ent["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if off + nbytes > len(blob):
            raise CorruptHeader(f"checkpoint payload truncated at {ent['name']!r}")
        arrays[ent["name"]] = np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(shape).copy()
        off += nbytes
    if off != len(blob):
        raise CorruptHeader(f"checkpoint payload has {len(blob) - off} trailing bytes")
    return header, arrays
