import json
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from knock_sdae.evaluation import (FAST_PROFILE, PAPER_SWEEPS, ExperimentConfig, SplitSpec,
                                   apply_sweep_value, confusion_matrix, evaluate,
                                   read_confusion_csv, read_sweep_csv, run_experiment, split, sweep,
                                   time_inference, write_confusion_csv)
from knock_sdae.nn import init_layer
from knock_sdae.sdae import LayerLayout, SdaeModel, predict_labels
from knock_sdae.signals import LabeledDataset

TINY = replace(ExperimentConfig(), **{**FAST_PROFILE, "pretrain_epochs": 5, "finetune_epochs": 10,
                                      "hidden": [16, 8], "timing_repetitions": 2})


def toy_dataset(n_classes, trials, dim=6, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(n_classes), trials)
    return LabeledDataset(rng.uniform(-1, 1, (n_classes * trials, dim)), labels, n_classes)


def row_hash(row):
    return row.tobytes()


class TestSplit:
    def test_paper_counts(self):
        train, test = split(toy_dataset(30, 120, dim=3))
        assert (len(train), len(test)) == (3000, 600)
        assert np.all(np.bincount(test.labels) == 20)

    def test_first_trials_train(self):
        data = toy_dataset(3, 10)
        train, test = split(data, SplitSpec(6, 4))
        for c in range(3):
            rows = data.windows[data.labels == c]
            np.testing.assert_array_equal(train.windows[train.labels == c], rows[:6])
            np.testing.assert_array_equal(test.windows[test.labels == c], rows[6:10])

    def test_singletons(self):
        train, test = split(toy_dataset(4, 2), SplitSpec(1, 1))
        assert len(train) == len(test) == 4
        assert not {row_hash(r) for r in train.windows} & {row_hash(r) for r in test.windows}

    def test_partition(self):
        data = toy_dataset(5, 12)
        train, test = split(data, SplitSpec(8, 4))
        joined = Counter(row_hash(r) for r in np.concatenate([train.windows, test.windows]))
        assert joined == Counter(row_hash(r) for r in data.windows)

    def test_insufficient(self):
        with pytest.raises(ValueError):
            split(toy_dataset(2, 5), SplitSpec(4, 2))

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SplitSpec(0, 1)


class TestEvaluate:
    def test_perfect(self):
        data = toy_dataset(4, 3)
        acc, cm = evaluate(lambda w: data.labels.copy(), data)
        assert acc == 1.0
        np.testing.assert_array_equal(cm, np.eye(4))

    def test_constant(self):
        data = toy_dataset(30, 2, dim=2)
        acc, _ = evaluate(lambda w: np.zeros(len(w), dtype=int), data)
        assert acc == pytest.approx(1 / 30, abs=1e-15)

    def test_tally_oracle(self, rng):
        for _ in range(20):
            true = rng.integers(0, 5, 40)
            pred = rng.integers(0, 5, 40)
            data = LabeledDataset(np.zeros((40, 1)), true, 5)
            acc, cm = evaluate(lambda w: pred, data)
            tally = Counter(zip(true.tolist(), pred.tolist()))
            for t in range(5):
                n_t = int(np.sum(true == t))
                for p in range(5):
                    expected = tally[(t, p)] / n_t if n_t else 0.0
                    assert cm[t, p] == pytest.approx(expected, abs=1e-15)
            assert acc == sum(tally[(c, c)] for c in range(5)) / 40

    def test_invariants(self, rng):
        true = rng.integers(0, 7, 200)
        pred = np.where(rng.random(200) < 0.6, true, rng.integers(0, 7, 200))
        cm = confusion_matrix(true, pred, 7)
        freq = np.bincount(true, minlength=7) / 200
        populated = freq > 0
        np.testing.assert_allclose(cm.sum(axis=1)[populated], 1, atol=1e-9)
        assert np.all((cm >= 0) & (cm <= 1))
        assert abs(float(freq @ np.diag(cm)) - np.mean(true == pred)) <= 1e-12

    def test_empty(self):
        with pytest.raises(ValueError):
            evaluate(lambda w: w, LabeledDataset(np.zeros((0, 2)), np.zeros(0, dtype=int), 2))

    def test_confusion_csv(self, tmp_path, rng):
        cm = confusion_matrix(rng.integers(0, 30, 300), rng.integers(0, 30, 300), 30)
        write_confusion_csv(tmp_path / "c.csv", cm)
        header = (tmp_path / "c.csv").read_text().splitlines()[0].split(",")
        assert header == ["truth"] + [str(c) for c in range(30)]
        np.testing.assert_array_equal(read_confusion_csv(tmp_path / "c.csv"), cm)


class TestTiming:
    def test_single_repetition(self):
        lo, hi = time_inference(lambda w: w.sum(), np.ones((10, 5)), 1)
        assert lo == hi and lo > 0

    def test_bad_repetitions(self):
        with pytest.raises(ValueError):
            time_inference(lambda w: w, np.ones(2), 0)

    def test_doubling_does_not_decrease(self, rng):
        model = SdaeModel([init_layer(500, 200, rng)], init_layer(200, 30, rng),
                          LayerLayout((500, 200, 30)))
        small = rng.uniform(-1, 1, (600, 500))
        double = np.concatenate([small, small])
        fn = lambda w: predict_labels(model, w)  # noqa: E731
        outcomes = []
        for _ in range(3):
            outcomes.append(time_inference(fn, double, 5)[0] >= time_inference(fn, small, 5)[0])
        assert sum(outcomes) >= 2


class TestConfig:
    def test_unknown_key(self):
        with pytest.raises(ValueError):
            ExperimentConfig.from_dict({"epochs": 3})

    def test_round_trip(self):
        cfg = replace(ExperimentConfig(), method="svm-mfcc", hidden=[3, 4])
        assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_bad_method(self):
        with pytest.raises(ValueError):
            ExperimentConfig(method="knn")

    def test_table_defaults(self):
        cfg = ExperimentConfig()
        assert cfg.hidden == [200, 200, 200]
        tc = cfg.train_config()
        assert (tc.pretrain_epochs, tc.finetune_epochs, tc.pretrain_lr, tc.finetune_lr) == \
            (500, 100, 0.1, 0.1)


class TestRunExperiment:
    def test_sdae_outputs(self, tmp_path):
        report = run_experiment(TINY, tmp_path)
        assert 0 <= report["accuracy"] <= 1
        assert report["confusion"].shape == (3, 3)
        for name in ("report.json", "confusion.csv", "model.json", "training_log.csv"):
            assert (tmp_path / name).exists()
        saved = json.loads((tmp_path / "report.json").read_text())
        assert saved["accuracy"] == report["accuracy"]
        t = saved["timing_seconds"]
        assert 0 < t["min"] <= t["max"]

    def test_deterministic(self):
        a, b = run_experiment(TINY), run_experiment(TINY)
        assert a["accuracy"] == b["accuracy"]
        np.testing.assert_array_equal(a["confusion"], b["confusion"])

    def test_report_reproduces_from_embedded_config(self, tmp_path):
        run_experiment(TINY, tmp_path)
        saved = json.loads((tmp_path / "report.json").read_text())
        again = run_experiment(ExperimentConfig.from_dict(saved["config"]))
        assert again["accuracy"] == saved["accuracy"]
        assert again["dataset_hash"] == saved["dataset_hash"]

    def test_mfcc_feature_dim(self):
        report = run_experiment(replace(TINY, method="svm-mfcc", svm_epochs=5))
        assert report["feature_dim"] == 36

    def test_raw_svm_sees_same_windows_as_sdae(self):
        sdae = run_experiment(TINY)
        raw = run_experiment(replace(TINY, method="svm-raw", svm_epochs=5))
        assert raw["dataset_hash"] == sdae["dataset_hash"]
        assert raw["feature_dim"] == sdae["feature_dim"] == 500


class TestSweep:
    def test_rows_and_means(self, tmp_path):
        values = [1, 2]
        results = sweep(TINY, "hidden_layers", values, 2, tmp_path / "s.csv")
        rows = read_sweep_csv(tmp_path / "s.csv")
        assert list(rows[0]) == ["param", "value", "rep", "accuracy", "seconds"]
        assert len(rows) == len(values) * 2 + len(values)
        for res in results:
            reps = [r for r in rows if r["value"] == str(res.value) and r["rep"] != "mean"]
            mean = [r for r in rows if r["value"] == str(res.value) and r["rep"] == "mean"][0]
            accs = [float(r["accuracy"]) for r in reps]
            assert float(mean["accuracy"]) == float(np.mean(accs))
            assert abs(res.mean_accuracy - sum(accs) / len(accs)) <= 1e-12
        summary = read_sweep_csv(tmp_path / "s_summary.csv")
        assert float(summary[0]["delta_vs_first"]) == 0.0

    def test_single_value_single_rep(self):
        (res,) = sweep(TINY, "denoising", [0.0], 1)
        assert res.mean_accuracy == res.accuracies[0]

    def test_reps_vary_seed_only(self):
        (res,) = sweep(TINY, "finetune_epochs", [10], 2)
        first = run_experiment(TINY)["accuracy"]
        assert res.accuracies[0] == first

    def test_unknown_param(self):
        with pytest.raises(ValueError):
            sweep(TINY, "momentum", [0.9], 1)

    def test_apply_values(self):
        base = ExperimentConfig()
        assert apply_sweep_value(base, "hidden_layers", 5).hidden == [200] * 5
        assert apply_sweep_value(base, "hidden_nodes", 400).hidden == [400] * 3
        assert apply_sweep_value(base, "layout", "300-200-100").hidden == [300, 200, 100]
        assert apply_sweep_value(base, "learning_rate", 1.0).pretrain_lr == 1.0
        assert apply_sweep_value(base, "denoising", 0.0).corruption_fraction == 0.0
        assert len(PAPER_SWEEPS["layout"]) == 3 and PAPER_SWEEPS["hidden_layers"] == [1, 2, 3, 4, 5]
