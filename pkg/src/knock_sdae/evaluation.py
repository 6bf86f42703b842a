"""Experiment harness: splitting, metrics, timing, experiments and sweeps."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .sdae import (LayerLayout, SdaeModel, TrainConfig, predict_labels, save_model,
                   train_sdae, write_training_log)
from .shallow import ShallowClassifier, SvmConfig, save_shallow, train_shallow
from .signals import CorpusConfig, LabeledDataset, load_dataset, synth_corpus

log = logging.getLogger(__name__)

METHODS = ("sdae", "svm-raw", "svm-mfcc")
SWEEP_PARAMS = ("hidden_layers", "layout", "hidden_nodes", "pretrain_epochs",
                "finetune_epochs", "learning_rate", "denoising")

PredictFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SplitSpec:
    train_per_class: int = 100
    test_per_class: int = 20

    def __post_init__(self):
        if self.train_per_class < 1 or self.test_per_class < 1:
            raise ValueError("train and test counts must be at least 1")


def split(dataset: LabeledDataset, spec: SplitSpec = SplitSpec()):
    """Per class, the first trials (in stored order) train and the next ones test."""
    need = spec.train_per_class + spec.test_per_class
    train_idx, test_idx = [], []
    for c in range(dataset.n_classes):
        rows = np.flatnonzero(dataset.labels == c)
        if rows.size < need:
            raise ValueError(f"class {c} has {rows.size} trials, split needs {need}")
        train_idx.append(rows[:spec.train_per_class])
        test_idx.append(rows[spec.train_per_class:need])
    tr = np.concatenate(train_idx)
    te = np.concatenate(test_idx)
    return (LabeledDataset(dataset.windows[tr], dataset.labels[tr], dataset.n_classes),
            LabeledDataset(dataset.windows[te], dataset.labels[te], dataset.n_classes))


def confusion_matrix(true: np.ndarray, pred: np.ndarray, n_classes: int) -> np.ndarray:
    """Row-normalized counts; row = ground truth, column = estimate."""
    counts = np.zeros((n_classes, n_classes))
    np.add.at(counts, (np.asarray(true), np.asarray(pred)), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)


def evaluate(predict_fn: PredictFn, test: LabeledDataset) -> tuple[float, np.ndarray]:
    if len(test) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    pred = np.asarray(predict_fn(test.windows))
    accuracy = float(np.mean(pred == test.labels))
    return accuracy, confusion_matrix(test.labels, pred, test.n_classes)


def time_inference(predict_fn: PredictFn, windows: np.ndarray,
                   repetitions: int = 5) -> tuple[float, float]:
    """Min and max wall-clock seconds of one full classification pass."""
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    times = []
    for _ in range(repetitions):
        start = time.perf_counter()
        predict_fn(windows)
        times.append(time.perf_counter() - start)
    return min(times), max(times)


def write_confusion_csv(path, matrix: np.ndarray) -> None:
    n = matrix.shape[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["truth"] + [str(c) for c in range(n)])
        for c, row in enumerate(matrix):
            writer.writerow([c] + [repr(float(v)) for v in row])


def read_confusion_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return np.array([[float(v) for v in row[1:]] for row in rows[1:]])


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one train/evaluate run.

    ``manifest`` selects a WAV corpus; without it a synthetic corpus is
    generated from ``n_classes``, ``trials_per_class`` and ``corpus_seed``.
    """

    method: str = "sdae"
    manifest: Optional[str] = None
    n_classes: int = 30
    trials_per_class: int = 120
    corpus_seed: int = 42
    window_length: int = 500
    train_per_class: int = 100
    test_per_class: int = 20
    hidden: list[int] = field(default_factory=lambda: [200, 200, 200])
    pretrain_epochs: int = 500
    finetune_epochs: int = 100
    pretrain_lr: float = 0.1
    finetune_lr: float = 0.1
    corruption_fraction: float = 0.25
    batch_size: int = 20
    seed: int = 0
    svm_lambda: float = 1e-4
    svm_epochs: int = 200
    svm_lr: float = 0.1
    timing_repetitions: int = 5

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        self.hidden = [int(h) for h in self.hidden]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.pretrain_epochs, self.finetune_epochs, self.pretrain_lr,
                           self.finetune_lr, self.corruption_fraction, self.batch_size, self.seed)

    def svm_config(self) -> SvmConfig:
        return SvmConfig(lam=self.svm_lambda, epochs=self.svm_epochs, lr=self.svm_lr,
                         batch_size=self.batch_size, seed=self.seed)

    def split_spec(self) -> SplitSpec:
        return SplitSpec(self.train_per_class, self.test_per_class)


FAST_PROFILE = dict(n_classes=3, trials_per_class=20, train_per_class=15, test_per_class=5,
                    pretrain_epochs=50, finetune_epochs=100)


def load_corpus(config: ExperimentConfig) -> LabeledDataset:
    if config.manifest:
        return load_dataset(config.manifest, config.window_length)
    return synth_corpus(config.n_classes, config.trials_per_class, config.corpus_seed,
                        CorpusConfig(window_length=config.window_length))


def train_model(config: ExperimentConfig, train: LabeledDataset):
    """Train the configured method; returns an SdaeModel or ShallowClassifier."""
    if config.method == "sdae":
        layout = LayerLayout.from_hidden(train.windows.shape[1], config.hidden, train.n_classes)
        return train_sdae(train.windows, train.labels, layout, config.train_config())
    kind = "raw" if config.method == "svm-raw" else "mfcc"
    return train_shallow(train.windows, train.labels, train.n_classes, kind, config.svm_config())


def predictor(model) -> PredictFn:
    if isinstance(model, SdaeModel):
        return lambda windows: predict_labels(model, windows)
    if isinstance(model, ShallowClassifier):
        return model.predict_labels
    raise TypeError(f"not a trained model: {type(model).__name__}")


def feature_dim(model) -> int:
    if isinstance(model, SdaeModel):
        return model.layout.n_input
    return model.svm.dim


def save_any(model, path) -> None:
    if isinstance(model, SdaeModel):
        save_model(model, path)
    else:
        save_shallow(model, path)


def evaluation_report(model, test: LabeledDataset, repetitions: int) -> dict:
    fn = predictor(model)
    accuracy, confusion = evaluate(fn, test)
    t_min, t_max = time_inference(fn, test.windows, repetitions)
    return {"accuracy": accuracy, "n_test": len(test), "n_classes": test.n_classes,
            "feature_dim": feature_dim(model),
            "timing_seconds": {"min": t_min, "max": t_max, "repetitions": repetitions},
            "confusion": confusion}


def run_experiment(config: ExperimentConfig, out_dir=None) -> dict:
    """Corpus, split, train, evaluate and time one configuration.

    With ``out_dir`` the report (``report.json``), confusion matrix
    (``confusion.csv``), model (``model.json``) and, for the SDAE, the
    training log (``training_log.csv``) are written there.
    """
    dataset = load_corpus(config)
    train, test = split(dataset, config.split_spec())
    start = time.perf_counter()
    model = train_model(config, train)
    train_seconds = time.perf_counter() - start
    result = evaluation_report(model, test, config.timing_repetitions)
    confusion = result.pop("confusion")
    report = {"config": config.to_dict(), "method": config.method,
              "dataset_hash": dataset.content_hash(), "n_train": len(train),
              "train_seconds": train_seconds, **result}
    log.info("%s accuracy %.4f (%d test windows)", config.method, report["accuracy"], len(test))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_confusion_csv(out / "confusion.csv", confusion)
        save_any(model, out / "model.json")
        if isinstance(model, SdaeModel):
            write_training_log(out / "training_log.csv", model)
        report["confusion_csv"] = "confusion.csv"
        (out / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    report["confusion"] = confusion
    return report


@dataclass
class SweepResult:
    param: str
    value: object
    accuracies: list[float]
    seconds: list[float]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def mean_seconds(self) -> float:
        return float(np.mean(self.seconds))


# default value grids for the hyperparameter figures and the layer-layout table
PAPER_SWEEPS = {
    "hidden_layers": [1, 2, 3, 4, 5],
    "hidden_nodes": [100, 200, 300, 400],
    "pretrain_epochs": [50, 100, 200, 500, 1000],
    "finetune_epochs": [25, 50, 100, 200],
    "learning_rate": [0.01, 0.1, 1.0],
    "layout": ["100-200-300", "100-100-100", "300-200-100"],
    "denoising": [0.0, 0.25],
}


def apply_sweep_value(base: ExperimentConfig, param: str, value) -> ExperimentConfig:
    width = base.hidden[0] if base.hidden else 200
    if param == "hidden_layers":
        return replace(base, hidden=[width] * int(value))
    if param == "hidden_nodes":
        return replace(base, hidden=[int(value)] * len(base.hidden))
    if param == "layout":
        sizes = value if isinstance(value, (list, tuple)) else [int(v) for v in str(value).split("-")]
        return replace(base, hidden=[int(v) for v in sizes])
    if param == "pretrain_epochs":
        return replace(base, pretrain_epochs=int(value))
    if param == "finetune_epochs":
        return replace(base, finetune_epochs=int(value))
    if param == "learning_rate":
        # the learning-rate figure varies the pretraining phase
        return replace(base, pretrain_lr=float(value))
    if param == "denoising":
        return replace(base, corruption_fraction=float(value))
    raise ValueError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")


def sweep(base: ExperimentConfig, param: str, values: Sequence, repetitions: int = 5,
          out_csv=None) -> list[SweepResult]:
    """Run ``repetitions`` seeds per value on a fixed corpus.

    Repetition ``r`` trains with seed ``base.seed + r``. With ``out_csv`` the
    per-run rows (``param,value,rep,accuracy,seconds``) plus one ``mean`` row
    per value are written there, and a summary with the accuracy delta of
    each value relative to the first is written next to it.
    """
    if param not in SWEEP_PARAMS:
        raise ValueError(f"unknown sweep parameter {param!r}; choose from {SWEEP_PARAMS}")
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    configs = [apply_sweep_value(base, param, v) for v in values]
    train, test = split(load_corpus(base), base.split_spec())
    results = []
    for value, cfg in zip(values, configs):
        accs, secs = [], []
        for rep in range(repetitions):
            run_cfg = replace(cfg, seed=base.seed + rep)
            start = time.perf_counter()
            model = train_model(run_cfg, train)
            acc, _ = evaluate(predictor(model), test)
            secs.append(time.perf_counter() - start)
            accs.append(acc)
            log.info("sweep %s=%s rep %d: accuracy %.4f", param, value, rep, acc)
        results.append(SweepResult(param, value, accs, secs))
    if out_csv is not None:
        write_sweep_csv(out_csv, results)
        write_sweep_summary(Path(out_csv).with_name(Path(out_csv).stem + "_summary.csv"), results)
    return results


def _fmt_value(value) -> str:
    if isinstance(value, (list, tuple)):
        return "-".join(str(v) for v in value)
    return str(value)


def write_sweep_csv(path, results: Sequence[SweepResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["param", "value", "rep", "accuracy", "seconds"])
        for res in results:
            for rep, (acc, sec) in enumerate(zip(res.accuracies, res.seconds)):
                writer.writerow([res.param, _fmt_value(res.value), rep, repr(acc), repr(sec)])
            writer.writerow([res.param, _fmt_value(res.value), "mean",
                             repr(res.mean_accuracy), repr(res.mean_seconds)])


def write_sweep_summary(path, results: Sequence[SweepResult]) -> None:
    baseline = results[0].mean_accuracy if results else 0.0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["param", "value", "mean_accuracy", "mean_seconds", "delta_vs_first"])
        for res in results:
            writer.writerow([res.param, _fmt_value(res.value), repr(res.mean_accuracy),
                             repr(res.mean_seconds), repr(res.mean_accuracy - baseline)])


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))

