"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is echoed in the pytest terminal
summary under "acceptance criteria". The full-scale corpus run (30 classes
x 120 trials, 500/100 epochs) takes several minutes on one core.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from test_features import naive_mfcc_feature

from knock_sdae import nn
from knock_sdae.dae import new_dae, pretrain_layer
from knock_sdae.evaluation import PAPER_SWEEPS, SWEEP_PARAMS, evaluate, read_sweep_csv, split, \
    time_inference
from knock_sdae.features import mfcc_feature
from knock_sdae.sdae import (LayerLayout, TrainConfig, load_model, predict_labels, save_model,
                             train_sdae)
from knock_sdae.shallow import SvmConfig, load_shallow, save_shallow, train_shallow
from knock_sdae.signals import synth_corpus


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"criterion {number:02d}: {'PASS' if passed else 'FAIL'}  {detail}")


def cli(*args, cwd=None):
    return subprocess.run([sys.executable, "-m", "knock_sdae", *args], capture_output=True,
                          text=True, cwd=cwd)


@pytest.fixture(scope="module")
def full_scale():
    """Seed-42 corpus, 100/20 split, SDAE with default training parameters and both SVMs."""
    corpus = synth_corpus(30, 120, 42)
    train, test = split(corpus)
    out = {"train": train, "test": test}
    start = time.perf_counter()
    out["sdae"] = train_sdae(train.windows, train.labels, LayerLayout((500, 200, 200, 200, 30)),
                             TrainConfig())
    out["sdae_seconds"] = time.perf_counter() - start
    out["svm_raw"] = train_shallow(train.windows, train.labels, 30, "raw", SvmConfig())
    out["svm_mfcc"] = train_shallow(train.windows, train.labels, 30, "mfcc", SvmConfig())
    out["fn"] = {
        "sdae": lambda w: predict_labels(out["sdae"], w),
        "svm-raw": out["svm_raw"].predict_labels,
        "svm-mfcc": out["svm_mfcc"].predict_labels,
    }
    out["results"] = {name: evaluate(fn, test) for name, fn in out["fn"].items()}
    return out


@pytest.fixture(scope="module")
def fast_sweeps(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweeps")
    start = time.perf_counter()
    done = cli("sweep", "--fast", "--param", "all", "--reps", "5", "--out", str(out))
    return out, done, time.perf_counter() - start


def test_c01_gradient_correctness():
    rng = np.random.default_rng(0)
    start = time.perf_counter()
    errors = []
    for trial in range(20):
        head = "softmax" if trial % 2 == 0 else "mse"
        layers, acts, loss, x, target = nn.random_instance(rng, head)
        assert len(layers) <= 4 and max(max(l.in_dim, l.out_dim) for l in layers) <= 32
        errors.append(nn.grad_check(layers, acts, loss, x, target, 1e-5))
    seconds = time.perf_counter() - start
    worst = max(errors)
    passed = worst < 1e-6 and seconds < 10
    record(1, passed, f"worst relative error {worst:.2e} over 20 nets "
                      f"({sum(e >= 1e-6 for e in errors)} above 1e-6), {seconds:.1f} s")
    assert passed


def test_c02_dae_descent():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    X = rng.uniform(-0.9, 0.9, (50, 20))
    _, history = pretrain_layer(new_dae(20, 10, rng, 0.25), X, 500, 0.1, 20, rng)
    seconds = time.perf_counter() - start
    ratio = history[-1] / history[0]
    passed = ratio <= 0.5 and seconds < 30
    record(2, passed, f"final/epoch-1 loss {ratio:.3f}, {seconds:.1f} s")
    assert passed


def test_c03_protocol_reproduction(full_scale):
    acc = full_scale["results"]["sdae"][0]
    seconds = full_scale["sdae_seconds"]
    passed = acc >= 0.85 and seconds < 15 * 60
    record(3, passed, f"SDAE test accuracy {acc:.4f} (chance {1 / 30:.3f}), "
                      f"training {seconds:.0f} s")
    assert passed


def test_c04_baseline_ordering(full_scale):
    res = full_scale["results"]
    sdae, raw, mfcc = res["sdae"][0], res["svm-raw"][0], res["svm-mfcc"][0]
    passed = sdae >= raw - 0.02
    record(4, passed, f"SDAE {sdae:.4f} vs raw SVM {raw:.4f} (MFCC SVM {mfcc:.4f}, reported only)")
    assert passed


def test_c05_mfcc_oracle():
    rng = np.random.default_rng(55)
    worst = 0.0
    for _ in range(10):
        window = rng.uniform(-1, 1, 500)
        naive, _ = naive_mfcc_feature(window)
        worst = max(worst, float(np.max(np.abs(mfcc_feature(window) - naive))))
    passed = worst <= 1e-9
    record(5, passed, f"max abs deviation from naive pipeline {worst:.2e}")
    assert passed


def test_c06_confusion_invariants(full_scale):
    test = full_scale["test"]
    ok = True
    worst_row, worst_trace = 0.0, 0.0
    for acc, cm in full_scale["results"].values():
        freq = np.bincount(test.labels, minlength=30) / len(test)
        worst_row = max(worst_row, float(np.max(np.abs(cm.sum(axis=1)[freq > 0] - 1))))
        worst_trace = max(worst_trace, abs(float(freq @ np.diag(cm)) - acc))
        ok &= cm.shape == (30, 30)
    passed = ok and worst_row <= 1e-9 and worst_trace <= 1e-12
    record(6, passed, f"30x30, row-sum error {worst_row:.1e}, trace-accuracy gap {worst_trace:.1e}")
    assert passed


def test_c07_determinism(tmp_path):
    flags = ["--fast", "--hidden", "50-30", "--timing-repetitions", "1"]
    accuracies = []
    for name in ("a", "b"):
        assert cli("train", *flags, "--model", str(tmp_path / f"{name}.json")).returncode == 0
        done = cli("eval", *flags, "--model", str(tmp_path / f"{name}.json"),
                   "--report", str(tmp_path / f"{name}_report.json"))
        assert done.returncode == 0
        accuracies.append(json.loads((tmp_path / f"{name}_report.json").read_text())["accuracy"])
    same_bytes = (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    passed = same_bytes and accuracies[0] == accuracies[1]
    record(7, passed, f"model files byte-identical: {same_bytes}, accuracies {accuracies}")
    assert passed


def test_c08_denoising_ablation(fast_sweeps):
    out, done, _ = fast_sweeps
    summary = read_sweep_csv(out / "sweep_denoising_summary.csv") if done.returncode == 0 else []
    values = [row["value"] for row in summary]
    passed = values == ["0.0", "0.25"] and float(summary[0]["delta_vs_first"]) == 0.0
    delta = float(summary[1]["delta_vs_first"]) if passed else float("nan")
    record(8, passed, f"accuracy delta with corruption 0.25 vs 0: {delta:+.4f} (fast profile)")
    assert passed


def test_c09_sweep_coverage(fast_sweeps):
    out, done, seconds = fast_sweeps
    ok = done.returncode == 0
    for param in SWEEP_PARAMS:
        if not ok:
            break
        rows = read_sweep_csv(out / f"sweep_{param}.csv")
        n_values = len(PAPER_SWEEPS[param])
        ok &= len(rows) == n_values * 6
        for block in range(n_values):
            chunk = rows[block * 6:(block + 1) * 6]
            ok &= [r["rep"] for r in chunk] == ["0", "1", "2", "3", "4", "mean"]
            ok &= float(chunk[-1]["accuracy"]) == float(np.mean([float(r["accuracy"])
                                                                  for r in chunk[:-1]]))
    passed = ok and seconds < 5 * 60
    record(9, passed, f"{len(SWEEP_PARAMS)} sweeps x 5 reps, fast profile {seconds:.0f} s "
                      f"(desk-scale runtime not exercised)")
    assert passed


def test_c10_timing_report(full_scale):
    windows = full_scale["test"].windows
    assert windows.shape == (600, 500)
    parts, ok = [], True
    for name, fn in full_scale["fn"].items():
        lo, hi = time_inference(fn, windows, 5)
        ok &= 0 < lo <= hi
        parts.append(f"{name} {lo:.5f}/{hi:.5f}")
    record(10, ok, "min/max seconds per 600 windows: " + ", ".join(parts))
    assert ok


def test_c11_persistence(full_scale, tmp_path):
    probe = np.random.default_rng(11).uniform(-1, 1, (100, 500))
    save_model(full_scale["sdae"], tmp_path / "sdae.json")
    same = bool(np.array_equal(predict_labels(load_model(tmp_path / "sdae.json"), probe),
                               predict_labels(full_scale["sdae"], probe)))
    for key in ("svm_raw", "svm_mfcc"):
        save_shallow(full_scale[key], tmp_path / f"{key}.json")
        back = load_shallow(tmp_path / f"{key}.json")
        same &= bool(np.array_equal(back.predict_labels(probe),
                                    full_scale[key].predict_labels(probe)))
    record(11, same, "SDAE, raw SVM and MFCC SVM predictions identical after reload")
    assert same


def test_finetune_loss_smoothed_non_increasing(full_scale):
    loss = np.array(full_scale["sdae"].finetune_history)
    smooth = np.convolve(loss, np.ones(10) / 10, mode="valid")
    assert np.all(np.diff(smooth) <= 0)
