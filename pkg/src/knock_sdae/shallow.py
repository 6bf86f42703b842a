"""One-vs-rest linear SVM baseline on raw windows or MFCC features."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import MalformedModelError, ModelShapeError, ModelVersionError
from .features import MfccConfig, mfcc_features

SVM_FORMAT_VERSION = 1
FEATURE_KINDS = ("raw", "mfcc")
STD_FLOOR = 1e-8


@dataclass
class FeatureScaler:
    mean: np.ndarray
    std: np.ndarray


def fit_scaler(train_features: np.ndarray) -> FeatureScaler:
    X = np.atleast_2d(np.asarray(train_features, dtype=np.float64))
    if X.shape[0] == 0:
        raise ValueError("cannot fit a scaler on an empty training set")
    return FeatureScaler(X.mean(axis=0), np.maximum(X.std(axis=0), STD_FLOOR))


def apply_scaler(scaler: FeatureScaler, features: np.ndarray) -> np.ndarray:
    return (np.asarray(features, dtype=np.float64) - scaler.mean) / scaler.std


@dataclass(frozen=True)
class SvmConfig:
    lam: float = 1e-4
    epochs: int = 200
    lr: float = 0.1
    lr_decay: float = 0.01  # lr_t = lr / (1 + lr_decay * epoch)
    batch_size: int = 20
    seed: int = 0


@dataclass
class OvrLinearSvm:
    W: np.ndarray  # (n_classes, dim), one weight vector per class
    b: np.ndarray  # (n_classes,)
    lam: float = 1e-4
    feature_kind: str = "raw"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ValueError("need one (w_c, b_c) pair per class")
        if self.feature_kind not in FEATURE_KINDS:
            raise ValueError(f"feature_kind must be one of {FEATURE_KINDS}")

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    @property
    def dim(self) -> int:
        return self.W.shape[1]


def _signed_targets(labels: np.ndarray, n_classes: int) -> np.ndarray:
    Y = -np.ones((labels.size, n_classes))
    Y[np.arange(labels.size), labels] = 1.0
    return Y


def svm_objective(model: OvrLinearSvm, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-class ``lam/2 |w_c|^2 + mean_i max(0, 1 - y_i (w_c . x_i + b_c))``."""
    X = np.atleast_2d(features)
    Y = _signed_targets(np.asarray(labels), model.n_classes)
    hinge = np.maximum(0.0, 1.0 - Y * (X @ model.W.T + model.b))
    return 0.5 * model.lam * np.sum(model.W ** 2, axis=1) + hinge.mean(axis=0)


def train_svm(features: np.ndarray, labels: np.ndarray, n_classes: Optional[int] = None,
              config: SvmConfig = SvmConfig(), feature_kind: str = "raw") -> OvrLinearSvm:
    """Minibatch subgradient descent on every one-vs-rest hinge problem at once.

    The per-class problems share the sample order but are otherwise
    independent. Features are expected to be standardized already.
    """
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    if np.unique(labels).size < 2 or n_classes < 2:
        raise ValueError("an SVM needs training samples from at least two classes")
    Y = _signed_targets(labels, n_classes)
    rng = np.random.default_rng(config.seed)
    W = np.zeros((n_classes, X.shape[1]))
    b = np.zeros(n_classes)
    n = X.shape[0]
    for epoch in range(config.epochs):
        lr = config.lr / (1.0 + config.lr_decay * epoch)
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = X[idx], Y[idx]
            active = (yb * (xb @ W.T + b)) < 1.0
            coeff = np.where(active, yb, 0.0) / idx.size
            W -= lr * (config.lam * W - coeff.T @ xb)
            b -= lr * (-coeff.sum(axis=0))
    return OvrLinearSvm(W, b, config.lam, feature_kind)


def svm_scores(model: OvrLinearSvm, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.shape[-1] != model.dim:
        raise ValueError(f"feature dimension {features.shape[-1]} != model dimension {model.dim}")
    return features @ model.W.T + model.b


def svm_predict(model: OvrLinearSvm, feature: np.ndarray) -> tuple[int, np.ndarray]:
    """Label (argmax, lowest index on ties) and per-class scores."""
    scores = svm_scores(model, feature)
    return int(np.argmax(scores)), scores


@dataclass
class ShallowClassifier:
    """Feature extraction, standardization and SVM bundled for prediction."""

    svm: OvrLinearSvm
    scaler: FeatureScaler
    mfcc_config: MfccConfig = MfccConfig()

    @property
    def feature_kind(self) -> str:
        return self.svm.feature_kind

    def features(self, windows: np.ndarray) -> np.ndarray:
        windows = np.atleast_2d(windows)
        if self.feature_kind == "mfcc":
            return mfcc_features(windows, self.mfcc_config)
        return windows

    def predict_labels(self, windows: np.ndarray) -> np.ndarray:
        scores = svm_scores(self.svm, apply_scaler(self.scaler, self.features(windows)))
        return np.argmax(scores, axis=-1)

    def predict(self, window: np.ndarray) -> tuple[int, np.ndarray]:
        feats = apply_scaler(self.scaler, self.features(window))[0]
        return svm_predict(self.svm, feats)


def train_shallow(windows: np.ndarray, labels: np.ndarray, n_classes: int,
                  feature_kind: str = "raw", config: SvmConfig = SvmConfig(),
                  mfcc_config: MfccConfig = MfccConfig()) -> ShallowClassifier:
    if feature_kind not in FEATURE_KINDS:
        raise ValueError(f"feature_kind must be one of {FEATURE_KINDS}")
    probe = ShallowClassifier(OvrLinearSvm(np.zeros((n_classes, 1)), np.zeros(n_classes),
                                           config.lam, feature_kind),
                              FeatureScaler(np.zeros(1), np.ones(1)), mfcc_config)
    feats = probe.features(windows)
    scaler = fit_scaler(feats)
    svm = train_svm(apply_scaler(scaler, feats), labels, n_classes, config, feature_kind)
    return ShallowClassifier(svm, scaler, mfcc_config)


def shallow_to_dict(clf: ShallowClassifier) -> dict:
    return {
        "format_version": SVM_FORMAT_VERSION,
        "kind": "svm",
        "feature_kind": clf.svm.feature_kind,
        "lambda": clf.svm.lam,
        "w": clf.svm.W.tolist(),
        "b": clf.svm.b.tolist(),
        "scaler": {"mean": clf.scaler.mean.tolist(), "std": clf.scaler.std.tolist()},
        "mfcc_config": asdict(clf.mfcc_config),
    }


def shallow_from_dict(data: dict) -> ShallowClassifier:
    if not isinstance(data, dict):
        raise MalformedModelError("model file must hold a JSON object")
    if data.get("format_version") != SVM_FORMAT_VERSION:
        raise ModelVersionError(f"unsupported SVM format_version {data.get('format_version')!r}")
    try:
        W = np.asarray(data["w"], dtype=np.float64)
        b = np.asarray(data["b"], dtype=np.float64)
        mean = np.asarray(data["scaler"]["mean"], dtype=np.float64)
        std = np.asarray(data["scaler"]["std"], dtype=np.float64)
        mfcc_config = MfccConfig(**data.get("mfcc_config", {}))
        kind = data["feature_kind"]
        lam = float(data["lambda"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedModelError(str(exc)) from exc
    if W.ndim != 2 or b.shape != (W.shape[0],) or mean.shape != (W.shape[1],) or std.shape != mean.shape:
        raise ModelShapeError("SVM weights, biases and scaler do not agree in shape")
    return ShallowClassifier(OvrLinearSvm(W, b, lam, kind), FeatureScaler(mean, std), mfcc_config)


def save_shallow(clf: ShallowClassifier, path) -> None:
    Path(path).write_text(json.dumps(shallow_to_dict(clf), indent=1) + "\n")


def load_shallow(path) -> ShallowClassifier:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedModelError(f"{path}: {exc}") from exc
    return shallow_from_dict(data)
