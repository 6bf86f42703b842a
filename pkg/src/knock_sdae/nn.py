"""Dense-layer numerics: affine maps, activations, losses and backprop.

Everything works in float64. Inputs may be a single vector of shape
``(in_dim,)`` or a minibatch of shape ``(batch, in_dim)``; batch losses are
the mean of the per-sample losses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

ACTIVATIONS = ("tanh", "identity", "softmax")
LOSSES = ("mse", "cross_entropy")

CE_EPS = 1e-12

# (dW, db) per layer, ordered like the layers they differentiate.
GradientSet = list[tuple[np.ndarray, np.ndarray]]


@dataclass
class DenseLayer:
    """Affine stage ``z = W x + b`` with ``W`` of shape (out_dim, in_dim)."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.ndim != 1:
            raise ValueError("W must be 2-D and b 1-D")
        if self.W.shape[0] != self.b.shape[0]:
            raise ValueError(
                f"W has {self.W.shape[0]} rows but b has length {self.b.shape[0]}")
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.b))):
            raise ValueError("layer parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.W.copy(), self.b.copy())

    @classmethod
    def _unchecked(cls, W: np.ndarray, b: np.ndarray) -> "DenseLayer":
        # hot path for SGD updates whose shapes are already known to match
        layer = object.__new__(cls)
        layer.W, layer.b = W, b
        return layer


def init_layer(in_dim: int, out_dim: int, rng: np.random.Generator) -> DenseLayer:
    """Uniform(+-sqrt(6 / (fan_in + fan_out))) weights, zero biases."""
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    W = rng.uniform(-limit, limit, size=(out_dim, in_dim))
    return DenseLayer(W, np.zeros(out_dim))


def affine_forward(layer: DenseLayer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.in_dim:
        raise ValueError(
            f"input has dimension {x.shape[-1]}, layer expects {layer.in_dim}")
    return x @ layer.W.T + layer.b


def activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "tanh":
        return np.tanh(z)
    if kind == "identity":
        return np.array(z, dtype=np.float64, copy=True)
    if kind == "softmax":
        shifted = z - np.max(z, axis=-1, keepdims=True)
        e = np.exp(shifted)
        return e / np.sum(e, axis=-1, keepdims=True)
    raise ValueError(f"unknown activation {kind!r}")


def mse_loss(x_hat: np.ndarray, x: np.ndarray) -> float:
    """Mean squared error over the last axis, averaged over any batch axis."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_hat.shape != x.shape:
        raise ValueError(f"shape mismatch: {x_hat.shape} vs {x.shape}")
    return float(np.mean(np.mean((x_hat - x) ** 2, axis=-1)))


def cross_entropy_loss(probs: np.ndarray, label) -> float:
    """Negative log-likelihood ``-log(probs[label] + eps)``.

    ``probs`` may be a batch of shape (batch, n_classes) with ``label`` an
    integer array; the batch mean is returned.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.atleast_1d(np.asarray(label))
    p2 = probs.reshape(-1, probs.shape[-1])
    if labels.shape[0] != p2.shape[0]:
        raise ValueError("one label per probability vector is required")
    if np.any(labels < 0) or np.any(labels >= p2.shape[1]):
        raise ValueError(f"label out of range for {p2.shape[1]} classes")
    picked = p2[np.arange(p2.shape[0]), labels]
    return float(np.mean(-np.log(picked + CE_EPS)))


def _check_chain(layers: Sequence[DenseLayer], activations: Sequence[str], loss: str):
    if len(layers) != len(activations) or not layers:
        raise ValueError("need one activation per layer and at least one layer")
    for prev, nxt in zip(layers, layers[1:]):
        if prev.out_dim != nxt.in_dim:
            raise ValueError(
                f"layer shapes do not chain: {prev.out_dim} -> {nxt.in_dim}")
    for kind in activations:
        if kind not in ACTIVATIONS:
            raise ValueError(f"unknown activation {kind!r}")
    if "softmax" in activations[:-1]:
        raise ValueError("softmax is only allowed as the final stage")
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}")
    if (activations[-1] == "softmax") != (loss == "cross_entropy"):
        raise ValueError("softmax output must be paired with cross_entropy loss")


def forward(layers: Sequence[DenseLayer], activations: Sequence[str],
            x: np.ndarray) -> list[np.ndarray]:
    """Return the list of stage outputs, starting with the input itself."""
    outs = [np.asarray(x, dtype=np.float64)]
    for layer, kind in zip(layers, activations):
        outs.append(activate(kind, affine_forward(layer, outs[-1])))
    return outs


def loss_value(layers, activations, loss: str, x, target) -> float:
    out = forward(layers, activations, x)[-1]
    if loss == "mse":
        return mse_loss(out, target)
    return cross_entropy_loss(out, target)


def backprop(layers: Sequence[DenseLayer], activations: Sequence[str], loss: str,
             x: np.ndarray, target) -> tuple[float, GradientSet]:
    """Loss and exact gradients with respect to every W and b.

    ``target`` is the regression target for ``"mse"`` and the integer class
    label(s) for ``"cross_entropy"``.
    """
    _check_chain(layers, activations, loss)
    outs = forward(layers, activations, x)
    out = outs[-1]
    single = out.ndim == 1
    A = [o.reshape(1, -1) if single else o for o in outs]
    batch = A[-1].shape[0]

    if loss == "mse":
        target = np.asarray(target, dtype=np.float64).reshape(A[-1].shape)
        diff = A[-1] - target
        value = float(np.mean(np.mean(diff ** 2, axis=1)))
        delta = 2.0 * diff / (diff.shape[1] * batch)
        delta = _through_activation(delta, A[-1], activations[-1])
    else:
        labels = np.atleast_1d(np.asarray(target))
        value = cross_entropy_loss(A[-1], labels)
        delta = A[-1].copy()
        delta[np.arange(batch), labels] -= 1.0
        delta /= batch

    grads: GradientSet = [None] * len(layers)  # type: ignore[list-item]
    for i in range(len(layers) - 1, -1, -1):
        grads[i] = (delta.T @ A[i], delta.sum(axis=0))
        if i > 0:
            delta = _through_activation(delta @ layers[i].W, A[i], activations[i - 1])
    return value, grads


def _through_activation(delta, out, kind):
    if kind == "tanh":
        return delta * (1.0 - out * out)
    if kind == "identity":
        return delta
    raise ValueError(f"cannot backpropagate an elementwise {kind!r} stage")


def finite_gradients(grads: GradientSet) -> bool:
    return all(np.all(np.isfinite(dW)) and np.all(np.isfinite(db)) for dW, db in grads)


def sgd_step(layers: Sequence[DenseLayer], grads: GradientSet, lr: float) -> list[DenseLayer]:
    """Plain gradient descent: return new layers with ``theta - lr * g``."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if len(layers) != len(grads):
        raise ValueError("gradient set does not match the parameter set")
    updated = []
    for layer, (dW, db) in zip(layers, grads):
        if dW.shape != layer.W.shape or db.shape != layer.b.shape:
            raise ValueError("gradient shapes do not match parameters")
        updated.append(DenseLayer._unchecked(layer.W - lr * dW, layer.b - lr * db))
    return updated


def grad_check(layers: Sequence[DenseLayer], activations: Sequence[str], loss: str,
               x, target, eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per parameter is ``|ga - gn| / max(1e-8, |ga| + |gn|)``.
    """
    if not 0 < eps <= 1e-2:
        raise ValueError("eps must lie in (0, 1e-2]")
    _, grads = backprop(layers, activations, loss, x, target)
    work = [layer.copy() for layer in layers]
    worst = 0.0
    for layer, (dW, db) in zip(work, grads):
        for param, analytic in ((layer.W, dW), (layer.b, db)):
            flat = param.reshape(-1)
            g_flat = analytic.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + eps
                plus = loss_value(work, activations, loss, x, target)
                flat[j] = orig - eps
                minus = loss_value(work, activations, loss, x, target)
                flat[j] = orig
                numeric = (plus - minus) / (2.0 * eps)
                err = abs(g_flat[j] - numeric) / max(1e-8, abs(g_flat[j]) + abs(numeric))
                worst = max(worst, err)
    return worst


def random_instance(rng: np.random.Generator, head: str = "softmax", max_layers: int = 4,
                    max_width: int = 32, batch: int = 3):
    """A random tanh network plus input and target for gradient checking.

    ``head`` is ``"softmax"`` (cross-entropy on integer labels) or ``"mse"``
    (tanh output regressed onto targets in (-0.9, 0.9)). Biases are random
    rather than zero so every parameter is exercised.
    """
    depth = int(rng.integers(1, max_layers + 1))
    dims = [int(d) for d in rng.integers(1, max_width + 1, size=depth + 1)]
    if head == "softmax":
        dims[-1] = max(dims[-1], 2)
    layers = []
    for a, b in zip(dims, dims[1:]):
        layer = init_layer(a, b, rng)
        layer.b[:] = rng.normal(0.0, 0.5, b)
        layers.append(layer)
    x = rng.normal(size=(batch, dims[0]))
    if head == "softmax":
        return layers, ["tanh"] * (depth - 1) + ["softmax"], "cross_entropy", x, \
            rng.integers(0, dims[-1], size=batch)
    if head == "mse":
        return layers, ["tanh"] * depth, "mse", x, rng.uniform(-0.9, 0.9, size=(batch, dims[-1]))
    raise ValueError(f"unknown head {head!r}")
