"""Dense networks with hand-written reverse-mode gradients.

Everything runs on float64 numpy arrays. A DenseNet applies its
activation after every layer except the last, which stays linear.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class Activation(str, Enum):
    LEAKY_RELU = "lrelu"
    RELU = "relu"
    TANH = "tanh"
    IDENTITY = "identity"


class Aggregation(str, Enum):
    MEAN = "mean"
    SUM = "sum"
    MAX = "max"
    MIN = "min"
    PRODUCT = "product"


_LEAKY_SLOPE = 0.01


def _act(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.LEAKY_RELU:
        return np.where(z > 0.0, z, _LEAKY_SLOPE * z)
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    if kind is Activation.TANH:
        return np.tanh(z)
    return z


def _act_deriv(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.LEAKY_RELU:
        return np.where(z > 0.0, 1.0, _LEAKY_SLOPE)
    if kind is Activation.RELU:
        return (z > 0.0).astype(np.float64)
    if kind is Activation.TANH:
        t = np.tanh(z)
        return 1.0 - t * t
    return np.ones_like(z)


@dataclass
class DenseNet:
    """Fully connected net; weights[i] has shape (dims[i+1], dims[i])."""

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: Activation

    def __post_init__(self):
        dims = self.layer_dims
        if len(dims) < 2:
            raise ValueError("need at least input and output dims")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("one weight/bias pair per layer required")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise ValueError(f"layer {i} shape mismatch")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite parameters")

    @classmethod
    def initialize(
        cls,
        layer_dims: list[int],
        activation: Activation,
        rng: np.random.Generator,
    ) -> "DenseNet":
        """Scaled-uniform fan-in init: U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
        weights, biases = [], []
        for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
            bound = 1.0 / np.sqrt(d_in)
            weights.append(rng.uniform(-bound, bound, (d_out, d_in)))
            biases.append(rng.uniform(-bound, bound, d_out))
        return cls(list(layer_dims), weights, biases, activation)

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        a = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            a = _act(self.activation, z) if i < last else z
        return a

    def forward_cached(self, x: np.ndarray):
        """Forward pass keeping layer inputs and pre-activations."""
        acts = [x]
        pre = []
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = acts[-1] @ w.T + b
            pre.append(z)
            acts.append(_act(self.activation, z) if i < last else z)
        return acts[-1], (acts, pre)

    def backward(self, cache, d_out: np.ndarray):
        """Gradients of a scalar loss given d(loss)/d(output).

        Returns (d_input, d_weights, d_biases).
        """
        acts, pre = cache
        n_layers = len(self.weights)
        d_weights = [None] * n_layers
        d_biases = [None] * n_layers
        dz = d_out
        for i in range(n_layers - 1, -1, -1):
            if i < n_layers - 1:
                dz = dz * _act_deriv(self.activation, pre[i])
            d_weights[i] = dz.T @ acts[i]
            d_biases[i] = dz.sum(axis=0)
            dz = dz @ self.weights[i]
        return dz, d_weights, d_biases

    def copy(self) -> "DenseNet":
        return DenseNet(
            list(self.layer_dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )


def aggregate(kind: Aggregation, embeds: np.ndarray) -> np.ndarray:
    """Reduce (batch, set, m) embeddings over the set axis."""
    if kind is Aggregation.MEAN:
        return embeds.mean(axis=1)
    if kind is Aggregation.SUM:
        return embeds.sum(axis=1)
    if kind is Aggregation.MAX:
        return embeds.max(axis=1)
    if kind is Aggregation.MIN:
        return embeds.min(axis=1)
    return embeds.prod(axis=1)


def aggregate_backward(
    kind: Aggregation, embeds: np.ndarray, d_agg: np.ndarray
) -> np.ndarray:
    """Spread d(loss)/d(aggregate) back over the set elements.

    Max/Min route the gradient to the arg element only, first index on
    ties. Product handles exact zeros (one zero: only that slot gets the
    product of the others; two or more: everything is zero).
    """
    b, n, m = embeds.shape
    if kind is Aggregation.MEAN:
        return np.broadcast_to(d_agg[:, None, :] / n, embeds.shape).copy()
    if kind is Aggregation.SUM:
        return np.broadcast_to(d_agg[:, None, :], embeds.shape).copy()
    if kind in (Aggregation.MAX, Aggregation.MIN):
        if kind is Aggregation.MAX:
            idx = embeds.argmax(axis=1)
        else:
            idx = embeds.argmin(axis=1)
        out = np.zeros_like(embeds)
        np.put_along_axis(out, idx[:, None, :], d_agg[:, None, :], axis=1)
        return out
    zero = embeds == 0.0
    n_zero = zero.sum(axis=1)
    prod_nonzero = np.where(zero, 1.0, embeds).prod(axis=1)
    out = np.zeros_like(embeds)
    clean = n_zero == 0
    if np.any(clean):
        with np.errstate(divide="ignore", invalid="ignore"):
            full = (d_agg * prod_nonzero)[:, None, :] / embeds
        out = np.where(clean[:, None, :], full, 0.0)
    single = n_zero == 1
    if np.any(single):
        hit = zero & single[:, None, :]
        out[hit] = np.broadcast_to(
            (d_agg * prod_nonzero)[:, None, :], embeds.shape
        )[hit]
    return out


class AdamOptimizer:
    """Adam with bias correction over a flat list of parameter arrays."""

    def __init__(
        self,
        params: list[np.ndarray],
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m += (1.0 - b1) * (g - m)
            v += (1.0 - b2) * (g * g - v)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
