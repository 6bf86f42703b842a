"""Stacked denoising autoencoder classifier.

Hidden layers are pretrained greedily as DAEs, each on the codes produced by
the encoders below it, then topped with a fresh softmax layer and fine-tuned
end to end with cross-entropy.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import nn
from .dae import new_dae, pretrain_layer
from .errors import (MalformedModelError, ModelFileError, ModelShapeError,
                     ModelVersionError, TrainingDivergedError)
from .nn import DenseLayer

FORMAT_VERSION = 1


@dataclass(frozen=True)
class LayerLayout:
    """Layer widths: input dim, hidden sizes, class count."""

    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 2:
            raise ValueError("a layout needs an input and an output size")
        if any(d < 1 for d in dims):
            raise ValueError("layer sizes must be positive")
        object.__setattr__(self, "dims", dims)

    @classmethod
    def from_hidden(cls, n_input: int, hidden: Sequence[int], n_classes: int) -> "LayerLayout":
        return cls((n_input, *hidden, n_classes))

    @classmethod
    def parse(cls, text: str) -> "LayerLayout":
        return cls(tuple(int(p) for p in text.split("-")))

    @property
    def n_input(self) -> int:
        return self.dims[0]

    @property
    def hidden(self) -> tuple[int, ...]:
        return self.dims[1:-1]

    @property
    def n_classes(self) -> int:
        return self.dims[-1]

    def __str__(self):
        return "-".join(str(d) for d in self.dims)


@dataclass(frozen=True)
class TrainConfig:
    pretrain_epochs: int = 500
    finetune_epochs: int = 100
    pretrain_lr: float = 0.1
    finetune_lr: float = 0.1
    corruption_fraction: float = 0.25
    batch_size: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.pretrain_epochs < 0 or self.finetune_epochs < 0:
            raise ValueError("epoch counts must be non-negative")
        if self.pretrain_lr <= 0 or self.finetune_lr <= 0:
            raise ValueError("learning rates must be positive")
        if not 0.0 <= self.corruption_fraction < 1.0:
            raise ValueError("corruption fraction must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch size must be positive")


@dataclass
class SdaeModel:
    encoders: list[DenseLayer]
    head: DenseLayer
    layout: LayerLayout
    train_config: TrainConfig = TrainConfig()
    pretrain_history: list[list[float]] = field(default_factory=list)
    finetune_history: list[float] = field(default_factory=list)

    def __post_init__(self):
        chain = [*self.encoders, self.head]
        expected = self.layout.dims
        if len(chain) != len(expected) - 1:
            raise ValueError(f"{len(chain)} layers do not match layout {self.layout}")
        for i, layer in enumerate(chain):
            if (layer.in_dim, layer.out_dim) != (expected[i], expected[i + 1]):
                raise ValueError(
                    f"layer {i} is {layer.in_dim}->{layer.out_dim}, "
                    f"layout {self.layout} wants {expected[i]}->{expected[i + 1]}")

    @property
    def layers(self) -> list[DenseLayer]:
        return [*self.encoders, self.head]

    @property
    def activations(self) -> list[str]:
        return ["tanh"] * len(self.encoders) + ["softmax"]


def pretrain_stack(windows: np.ndarray, layout: LayerLayout, config: TrainConfig,
                   rng: Optional[np.random.Generator] = None,
                   record_inputs: Optional[list] = None):
    """Greedy layer-wise DAE pretraining.

    Returns ``(encoders, histories)``. If ``record_inputs`` is a list, the
    training input of every layer is appended to it.
    """
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 2 or windows.shape[1] != layout.n_input:
        raise ValueError(f"windows must have shape (n, {layout.n_input})")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    encoders: list[DenseLayer] = []
    histories: list[list[float]] = []
    reps = windows
    for index, size in enumerate(layout.hidden):
        if record_inputs is not None:
            record_inputs.append(reps)
        dae = new_dae(reps.shape[1], size, rng, config.corruption_fraction)
        dae, history = pretrain_layer(dae, reps, config.pretrain_epochs, config.pretrain_lr,
                                      config.batch_size, rng, layer_index=index)
        encoders.append(dae.encoder)
        histories.append(history)
        reps = nn.activate("tanh", nn.affine_forward(dae.encoder, reps))
    return encoders, histories


def fine_tune(encoders: Sequence[DenseLayer], windows: np.ndarray, labels: np.ndarray,
              layout: LayerLayout, config: TrainConfig,
              rng: Optional[np.random.Generator] = None) -> SdaeModel:
    """Attach a fresh softmax head and train every layer on cross-entropy."""
    windows = np.asarray(windows, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= layout.n_classes):
        raise ValueError(f"labels must lie in [0, {layout.n_classes})")
    if windows.shape[0] != labels.shape[0]:
        raise ValueError("one label per window is required")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    head_in = encoders[-1].out_dim if encoders else layout.n_input
    head = nn.init_layer(head_in, layout.n_classes, rng)
    layers = [layer.copy() for layer in encoders] + [head]
    acts = ["tanh"] * len(encoders) + ["softmax"]
    history: list[float] = []
    n = windows.shape[0]
    for epoch in range(1, config.finetune_epochs + 1):
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = nn.backprop(layers, acts, "cross_entropy", windows[idx], labels[idx])
            if not (np.isfinite(loss) and nn.finite_gradients(grads)):
                raise TrainingDivergedError("finetune", epoch)
            losses.append(loss)
            layers = nn.sgd_step(layers, grads, config.finetune_lr)
        history.append(float(np.mean(losses)))
    return SdaeModel(layers[:-1], layers[-1], layout, config, finetune_history=history)


def train_sdae(windows: np.ndarray, labels: np.ndarray, layout: LayerLayout,
               config: TrainConfig = TrainConfig()) -> SdaeModel:
    """Pretrain then fine-tune from one RNG seeded by ``config.seed``."""
    rng = np.random.default_rng(config.seed)
    encoders, histories = pretrain_stack(windows, layout, config, rng)
    model = fine_tune(encoders, windows, labels, layout, config, rng)
    model.pretrain_history = histories
    return model


def predict_proba(model: SdaeModel, windows: np.ndarray) -> np.ndarray:
    windows = np.asarray(windows, dtype=np.float64)
    if windows.shape[-1] != model.layout.n_input:
        raise ValueError(
            f"window dimension {windows.shape[-1]} does not match layout input {model.layout.n_input}")
    return nn.forward(model.layers, model.activations, windows)[-1]


def predict(model: SdaeModel, window: np.ndarray) -> tuple[int, np.ndarray]:
    """Class label (argmax, lowest index on ties) and class probabilities."""
    probs = predict_proba(model, window)
    return int(np.argmax(probs)), probs


def predict_labels(model: SdaeModel, windows: np.ndarray) -> np.ndarray:
    return np.argmax(predict_proba(model, windows), axis=-1)


def write_training_log(path, model: SdaeModel) -> None:
    """CSV ``phase,layer,epoch,loss`` covering both training phases."""
    with open(path, "w") as fh:
        fh.write("phase,layer,epoch,loss\n")
        for layer, history in enumerate(model.pretrain_history):
            for epoch, loss in enumerate(history, start=1):
                fh.write(f"pretrain,{layer},{epoch},{loss!r}\n")
        for epoch, loss in enumerate(model.finetune_history, start=1):
            fh.write(f"finetune,all,{epoch},{loss!r}\n")


def _layer_to_dict(layer: DenseLayer) -> dict:
    return {"rows": layer.out_dim, "cols": layer.in_dim,
            "W": layer.W.reshape(-1).tolist(), "b": layer.b.tolist()}


def _layer_from_dict(data: dict, where: str) -> DenseLayer:
    try:
        rows, cols = int(data["rows"]), int(data["cols"])
        W = np.asarray(data["W"], dtype=np.float64)
        b = np.asarray(data["b"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedModelError(f"{where}: {exc}") from exc
    if W.ndim != 1 or W.size != rows * cols or b.shape != (rows,):
        raise ModelShapeError(
            f"{where}: declared {rows}x{cols} but found {W.size} weights and {b.size} biases")
    return DenseLayer(W.reshape(rows, cols), b)


def model_to_dict(model: SdaeModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "sdae",
        "layout": list(model.layout.dims),
        "train_config": asdict(model.train_config),
        "encoders": [_layer_to_dict(layer) for layer in model.encoders],
        "head": _layer_to_dict(model.head),
    }


def model_from_dict(data: dict) -> SdaeModel:
    if not isinstance(data, dict):
        raise MalformedModelError("model file must hold a JSON object")
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelVersionError(f"unsupported model format_version {version!r}")
    try:
        layout = LayerLayout(tuple(data["layout"]))
        known = {f.name for f in fields(TrainConfig)}
        config = TrainConfig(**{k: v for k, v in data["train_config"].items() if k in known})
        encoders = [_layer_from_dict(d, f"encoder {i}") for i, d in enumerate(data["encoders"])]
        head = _layer_from_dict(data["head"], "head")
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedModelError(str(exc)) from exc
    try:
        return SdaeModel(encoders, head, layout, config)
    except ValueError as exc:
        raise ModelShapeError(str(exc)) from exc


def save_model(model: SdaeModel, path) -> None:
    # json writes floats with repr(), the shortest string that round-trips exactly
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n")


def load_model(path) -> SdaeModel:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedModelError(f"{path}: {exc}") from exc
    return model_from_dict(data)
