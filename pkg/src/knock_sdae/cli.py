"""Command-line front end: ``knock-sdae <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import nn
from .errors import MalformedModelError
from .evaluation import (FAST_PROFILE, METHODS, PAPER_SWEEPS, SWEEP_PARAMS, ExperimentConfig,
                         evaluation_report, load_corpus, run_experiment, save_any,
                         split, sweep, train_model, write_confusion_csv)
from .sdae import SdaeModel, model_from_dict, predict, write_training_log
from .shallow import shallow_from_dict
from .signals import CorpusConfig, extract_window, load_wav, normalize, write_corpus

log = logging.getLogger("knock_sdae")


def load_any_model(path):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MalformedModelError(f"{path}: {exc}") from exc
    if isinstance(data, dict) and data.get("kind") == "svm":
        return shallow_from_dict(data)
    return model_from_dict(data)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON experiment config")
    parser.add_argument("--fast", action="store_true",
                        help="tiny CI profile: 3 classes, 20 trials, 50/100 epochs")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "hidden":
            parser.add_argument(flag, help="hidden sizes, e.g. 200-200-200")
        elif f.name == "method":
            parser.add_argument(flag, choices=METHODS)
        elif f.name == "manifest":
            parser.add_argument(flag, help="CSV manifest (path,label) of WAV files")
        else:
            kind = float if isinstance(f.default, float) else int
            parser.add_argument(flag, type=kind)


def config_from_args(args) -> ExperimentConfig:
    config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.fast:
        config = replace(config, **FAST_PROFILE)
    overrides = {}
    for f in fields(ExperimentConfig):
        value = getattr(args, f.name, None)
        if value is None:
            continue
        if f.name == "hidden":
            value = [int(v) for v in value.split("-")] if value else []
        overrides[f.name] = value
    return replace(config, **overrides)


def cmd_synth(args) -> int:
    manifest = write_corpus(args.out, args.classes, args.trials, args.seed,
                            CorpusConfig(rate_hz=args.rate))
    print(f"wrote {args.classes * args.trials} recordings; manifest at {manifest}")
    return 0


def cmd_train(args) -> int:
    config = config_from_args(args)
    train, _ = split(load_corpus(config), config.split_spec())
    start = time.perf_counter()
    model = train_model(config, train)
    log.info("trained %s in %.1f s", config.method, time.perf_counter() - start)
    save_any(model, args.model)
    if args.log and isinstance(model, SdaeModel):
        write_training_log(args.log, model)
    print(f"model written to {args.model}")
    return 0


def cmd_eval(args) -> int:
    config = config_from_args(args)
    model = load_any_model(args.model)
    train, test = split(load_corpus(config), config.split_spec())
    target = train if args.subset == "train" else test
    report = evaluation_report(model, target, config.timing_repetitions)
    confusion = report.pop("confusion")
    report = {"config": config.to_dict(), "model": str(args.model), "subset": args.subset, **report}
    if args.confusion:
        write_confusion_csv(args.confusion, confusion)
        report["confusion_csv"] = str(args.confusion)
    text = json.dumps(report, indent=2) + "\n"
    if args.report:
        Path(args.report).write_text(text)
    print(text, end="")
    return 0


def cmd_run(args) -> int:
    report = run_experiment(config_from_args(args), args.out_dir)
    report.pop("confusion")
    print(json.dumps(report, indent=2))
    return 0


def _parse_values(param: str, text: str | None):
    if text is None:
        return PAPER_SWEEPS[param]
    values = []
    for item in text.split(","):
        item = item.strip()
        if param == "layout":
            values.append(item)
        elif param in ("learning_rate", "denoising"):
            values.append(float(item))
        else:
            values.append(int(item))
    return values


def cmd_sweep(args) -> int:
    base = config_from_args(args)
    params = SWEEP_PARAMS if args.param == "all" else [args.param]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for param in params:
        values = _parse_values(param, args.values if args.param != "all" else None)
        results = sweep(base, param, values, args.reps, out_dir / f"sweep_{param}.csv")
        for res in results:
            print(f"{param}={res.value}: mean accuracy {res.mean_accuracy:.4f} "
                  f"over {len(res.accuracies)} runs")
    return 0


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for trial in range(args.trials):
        head = "softmax" if trial % 2 == 0 else "mse"
        layers, acts, loss, x, target = nn.random_instance(rng, head, max_width=args.max_width)
        err = nn.grad_check(layers, acts, loss, x, target, args.eps)
        worst = max(worst, err)
        dims = "-".join(str(d) for d in [layers[0].in_dim] + [l.out_dim for l in layers])
        print(f"trial {trial:2d} dims {dims:20s} {loss:13s} max rel err {err:.3e}")
    ok = worst < args.tolerance
    print(f"worst {worst:.3e} -> {'PASS' if ok else 'FAIL'} (tolerance {args.tolerance:g})")
    return 0 if ok else 1


def cmd_predict(args) -> int:
    model = load_any_model(args.model)
    n_input = model.layout.n_input if isinstance(model, SdaeModel) else None
    if n_input is None:
        n_input = model.svm.dim if model.feature_kind == "raw" else args.window_length
    window = normalize(extract_window(load_wav(args.wav), n_input))
    if isinstance(model, SdaeModel):
        label, scores = predict(model, window)
        key = "probs"
    else:
        label, scores = model.predict(window)
        key = "scores"
    print(json.dumps({"label": label, key: [float(s) for s in scores]}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="knock-sdae", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic knock corpus as WAV files + manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=30)
    p.add_argument("--trials", type=int, default=120)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--rate", type=int, default=8000)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on the training split")
    _add_config_flags(p)
    p.add_argument("--model", required=True, help="output model JSON")
    p.add_argument("--log", help="training-log CSV (SDAE only)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model on the test split")
    _add_config_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--subset", choices=("test", "train"), default="test")
    p.add_argument("--report", help="report JSON path")
    p.add_argument("--confusion", help="confusion-matrix CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="train, evaluate and write report + confusion in one go")
    _add_config_flags(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="vary one hyperparameter over repeated seeds")
    _add_config_flags(p)
    p.add_argument("--param", required=True, choices=(*SWEEP_PARAMS, "all"))
    p.add_argument("--values", help="comma-separated values (default: the paper's grid)")
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--out", required=True, help="output directory for sweep CSVs")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of backprop")
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--max-width", type=int, default=32)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("predict", help="classify a single WAV recording")
    p.add_argument("--model", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--window-length", type=int, default=500)
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
