"""Single denoising autoencoder with masking corruption."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import nn
from .errors import TrainingDivergedError
from .nn import DenseLayer


@dataclass
class Dae:
    encoder: DenseLayer  # hidden x visible
    decoder: DenseLayer  # visible x hidden, independent of encoder.W.T
    corruption_fraction: float = 0.25
    output_activation: str = "tanh"

    def __post_init__(self):
        if self.decoder.in_dim != self.encoder.out_dim:
            raise ValueError("decoder input must match the encoder's hidden size")
        if self.decoder.out_dim != self.encoder.in_dim:
            raise ValueError("decoder output must match the encoder's input size")
        if not 0.0 <= self.corruption_fraction < 1.0:
            raise ValueError("corruption fraction must lie in [0, 1)")
        if self.output_activation not in ("tanh", "identity"):
            raise ValueError("decoder output activation must be tanh or identity")

    @property
    def visible(self) -> int:
        return self.encoder.in_dim

    @property
    def hidden(self) -> int:
        return self.encoder.out_dim

    @property
    def activations(self) -> tuple[str, str]:
        return ("tanh", self.output_activation)


def new_dae(visible: int, hidden: int, rng: np.random.Generator,
            corruption_fraction: float = 0.25, output_activation: str = "tanh") -> Dae:
    encoder = nn.init_layer(visible, hidden, rng)
    decoder = nn.init_layer(hidden, visible, rng)
    return Dae(encoder, decoder, corruption_fraction, output_activation)


@dataclass(frozen=True)
class CorruptedInput:
    values: np.ndarray
    mask: np.ndarray  # True where the input was zeroed


def corrupt(x: np.ndarray, fraction: float, rng: np.random.Generator) -> CorruptedInput:
    """Zero exactly ``round(fraction * n)`` positions chosen without replacement.

    Accepts a batch (one row per sample); each row gets its own mask. A zero
    count draws nothing from ``rng``.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError("corruption fraction must lie in [0, 1)")
    x = np.asarray(x, dtype=np.float64)
    rows = np.atleast_2d(x)
    n = rows.shape[1]
    k = int(round(fraction * n))
    mask = np.zeros(rows.shape, dtype=bool)
    if k > 0:
        # the k smallest of n uniform draws form a uniform k-subset
        picks = np.argpartition(rng.random(rows.shape), k - 1, axis=1)[:, :k]
        np.put_along_axis(mask, picks, True, axis=1)
    values = np.where(mask, 0.0, rows)
    if x.ndim == 1:
        return CorruptedInput(values[0], mask[0])
    return CorruptedInput(values, mask)


def encode(dae: Dae, x: np.ndarray) -> np.ndarray:
    return nn.activate("tanh", nn.affine_forward(dae.encoder, x))


def decode(dae: Dae, y: np.ndarray) -> np.ndarray:
    return nn.activate(dae.output_activation, nn.affine_forward(dae.decoder, y))


BatchHook = Callable[[np.ndarray, np.ndarray], None]


def pretrain_layer(dae: Dae, inputs: np.ndarray, epochs: int, lr: float,
                   batch_size: int, rng: np.random.Generator,
                   on_batch: Optional[BatchHook] = None,
                   layer_index: Optional[int] = None) -> tuple[Dae, list[float]]:
    """Train ``dae`` to reconstruct clean inputs from corrupted ones.

    Each epoch shuffles the inputs; every minibatch is corrupted afresh,
    encoded, decoded and scored by MSE against the clean rows.
    ``on_batch(clean, corrupted)`` is called before each update. Returns the
    trained copy and the per-epoch mean of the minibatch losses.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise ValueError("pretraining needs a non-empty 2-D input array")
    if inputs.shape[1] != dae.visible:
        raise ValueError(f"inputs have dimension {inputs.shape[1]}, DAE expects {dae.visible}")
    if batch_size < 1:
        raise ValueError("batch size must be positive")

    layers = [dae.encoder.copy(), dae.decoder.copy()]
    acts = dae.activations
    history: list[float] = []
    n = inputs.shape[0]
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, batch_size):
            clean = inputs[order[start:start + batch_size]]
            noisy = corrupt(clean, dae.corruption_fraction, rng).values
            if on_batch is not None:
                on_batch(clean, noisy)
            loss, grads = nn.backprop(layers, acts, "mse", noisy, clean)
            if not (np.isfinite(loss) and nn.finite_gradients(grads)):
                raise TrainingDivergedError("pretrain", epoch, layer_index)
            losses.append(loss)
            layers = nn.sgd_step(layers, grads, lr)
        history.append(float(np.mean(losses)))
    trained = Dae(layers[0], layers[1], dae.corruption_fraction, dae.output_activation)
    return trained, history


def write_loss_csv(path, history: list[float]) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,mean_loss\n")
        for epoch, loss in enumerate(history, start=1):
            fh.write(f"{epoch},{loss!r}\n")
