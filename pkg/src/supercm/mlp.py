"""Fully connected feature extractor with a hand-written backward pass."""
from dataclasses import dataclass, field

import numpy as np

from .core_math import ShapeError

ACTIVATIONS = ("relu", "tanh")


class StaleCacheError(RuntimeError):
    """A backward call was given a cache that does not belong to this state."""


@dataclass
class MlpState:
    weights: list
    biases: list
    activation: str = "relu"

    def __post_init__(self):
        if not self.weights:
            raise ShapeError("an MLP needs at least one layer")
        if len(self.weights) != len(self.biases):
            raise ShapeError("weights and biases differ in count")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (w.shape[1],):
                raise ShapeError(f"layer {i}: bias shape {b.shape} for weights {w.shape}")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(f"layer {i} does not chain onto layer {i - 1}")

    @classmethod
    def init(cls, widths, rng, activation: str = "relu", dtype=np.float64, gain: float = 1.0) -> "MlpState":
        """``widths`` = [input, hidden..., embedding]; uniform ±gain/sqrt(fan_in)."""
        if len(widths) < 2:
            raise ShapeError("widths needs an input and an output size")
        ws, bs = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            bound = gain / np.sqrt(fan_in)
            ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
            bs.append(np.zeros(fan_out, dtype=dtype))
        return cls(ws, bs, activation)

    @property
    def widths(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MlpState":
        return MlpState([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.activation)


@dataclass
class MlpCache:
    owner: int
    shapes: tuple
    inputs: list = field(default_factory=list)  # input to each layer
    pre: list = field(default_factory=list)  # pre-activations of hidden layers


def _fingerprint(state: MlpState) -> tuple:
    return tuple(w.shape for w in state.weights)


def forward(inputs, state: MlpState):
    """Return ``(features, cache)``; the last layer is linear."""
    h = np.asarray(inputs)
    if h.ndim != 2 or h.shape[1] != state.weights[0].shape[0]:
        raise ShapeError(f"input shape {h.shape} vs first layer {state.weights[0].shape}")
    cache = MlpCache(owner=id(state), shapes=_fingerprint(state))
    last = len(state.weights) - 1
    for i, (w, b) in enumerate(zip(state.weights, state.biases)):
        cache.inputs.append(h)
        a = h @ w + b
        if i == last:
            return a, cache
        cache.pre.append(a)
        h = np.maximum(a, 0.0) if state.activation == "relu" else np.tanh(a)


def backward(grad_features, cache: MlpCache, state: MlpState):
    """Reverse pass. Returns ``(grad_inputs, grads)`` with grads laid out like
    :meth:`MlpState.params` (w0, b0, w1, b1, ...)."""
    if cache.owner != id(state) or cache.shapes != _fingerprint(state):
        raise StaleCacheError("cache was produced by a different network")
    g = np.asarray(grad_features)
    n_layers = len(state.weights)
    grads = [None] * (2 * n_layers)
    for i in range(n_layers - 1, -1, -1):
        x_in = cache.inputs[i]
        grads[2 * i] = x_in.T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ state.weights[i].T
        if i > 0:
            pre = cache.pre[i - 1]
            if state.activation == "relu":
                g = g * (pre > 0)
            else:
                g = g * (1.0 - x_in * x_in)
    return g, grads
