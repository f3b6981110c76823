"""Command-line interface composing the library into batch workflows.

Every subcommand writes a ``manifest`` next to its outputs echoing the
exact configuration (including the seed and package version), so two
runs with the same inputs produce byte-identical artifacts.  Options can
be preloaded from a flat ``key=value`` config file via ``--config``;
explicit flags win over file values.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from importlib import resources

import numpy as np

from . import __version__
from .errors import EcgdxError
from .records import ClassMap, labels_from_codes, load_record, save_record
from .preprocess import PreprocessConfig, make_example
from .rpeaks import detect_rpeaks
from .synth import SynthSpec, generate
from .ensemble import (DEFAULT_THRESHOLD, postprocess, read_predictions,
                       relabel_pseudo, write_predictions)
from .scoring import RewardMatrix, challenge_score, per_class_metrics
from .nn import SeResNet, SeResNetConfig, load_checkpoint, save_checkpoint, train


def _write_manifest(path: str, command: str, options: dict) -> None:
    lines = [f"command={command}", f"version={__version__}"]
    for key in sorted(options):
        lines.append(f"{key}={options[key]}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _manifest_options(args: argparse.Namespace) -> dict:
    skip = {"func", "config", "command"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def _load_classmap(path: str | None) -> ClassMap:
    return ClassMap.load(path) if path else ClassMap.default()


def _record_stems(data_dir: str) -> list[str]:
    stems = sorted(os.path.splitext(name)[0]
                   for name in os.listdir(data_dir) if name.endswith(".hea"))
    if not stems:
        raise EcgdxError(f"no .hea records found in {data_dir}")
    return [os.path.join(data_dir, s) for s in stems]


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------

def _cmd_synth(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.count):
        spec = SynthSpec(bpm=args.bpm, fs=args.fs, duration=args.duration,
                         noise_sigma=args.noise_sigma,
                         ectopic_rate=args.ectopic_rate, seed=args.seed + i)
        rec, beats, _ = generate(spec, record_id=f"rec{i:03d}")
        save_record(rec, args.out)
        with open(os.path.join(args.out, f"rec{i:03d}.beats.csv"), "w",
                  encoding="utf-8") as fh:
            fh.write("beat_sample_index\n")
            fh.writelines(f"{b}\n" for b in beats)
    _write_manifest(os.path.join(args.out, "manifest.txt"), "synth",
                    _manifest_options(args))
    return 0


def _cmd_preprocess(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    cmap = _load_classmap(args.classes)
    cfg = PreprocessConfig(target_fs=args.target_fs,
                           window_seconds=args.window,
                           wavelet=args.wavelet,
                           decomposition_level=args.level,
                           denoise_enabled=not args.no_denoise)
    xs, ys, ids = [], [], []
    for stem in _record_stems(args.data):
        rec = load_record(stem)
        x, y = make_example(rec, cfg, cmap)
        xs.append(x)
        ys.append(y)
        ids.append(rec.record_id)
    np.savez(os.path.join(args.out, "features.npz"),
             x=np.stack(xs), y=np.stack(ys), record_ids=np.array(ids))
    _write_manifest(os.path.join(args.out, "manifest.txt"), "preprocess",
                    _manifest_options(args))
    return 0


def _cmd_rpeaks(args) -> int:
    rec = load_record(args.record)
    result = detect_rpeaks(rec.lead("I"), rec.fs)
    writer = csv.writer(sys.stdout, lineterminator="\n")
    writer.writerow(["sample_index", "rr_seconds"])
    for k, idx in enumerate(result.peak_indices):
        rr = "" if k == 0 else repr(float(result.rr_intervals[k - 1]))
        writer.writerow([int(idx), rr])
    return 0


def _model_config(args, input_length: int) -> SeResNetConfig:
    if args.preset == "small":
        return SeResNetConfig.small(input_length=input_length, seed=args.seed)
    return SeResNetConfig(input_length=input_length, seed=args.seed)


def _cmd_train(args) -> int:
    cmap = _load_classmap(args.classes)
    cfg = PreprocessConfig(target_fs=args.target_fs, window_seconds=args.window,
                           denoise_enabled=not args.no_denoise)
    xs, ys = [], []
    for stem in _record_stems(args.data):
        x, y = make_example(load_record(stem), cfg, cmap)
        xs.append(x)
        ys.append(y)
    x = np.stack(xs)
    y = np.stack(ys)
    config = _model_config(args, input_length=x.shape[2])
    result = train(x, y, config, epochs=args.epochs, batch_size=args.batch_size)
    save_checkpoint(args.out, result.model)
    history_path = args.out + ".history.csv"
    with open(history_path, "w", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "lr", "loss"])
        for row in result.history:
            writer.writerow([row["epoch"], repr(row["lr"]), repr(row["loss"])])
    _write_manifest(args.out + ".manifest.txt", "train", _manifest_options(args))
    return 0


def _predict_probs(model: SeResNet, records, target_fs: int,
                   cmap: ClassMap) -> np.ndarray:
    window = model.config.input_length / target_fs
    cfg = PreprocessConfig(target_fs=target_fs, window_seconds=window,
                           denoise_enabled=False)
    xs = [make_example(rec, cfg, cmap)[0] for rec in records]
    x = np.stack(xs)
    out = []
    for start in range(0, x.shape[0], 32):
        out.append(model.predict_probs(x[start:start + 32]))
    return np.concatenate(out, axis=0)


def _load_models(args) -> tuple[SeResNet, SeResNet]:
    long_path = args.checkpoint_long or args.checkpoint
    short_path = args.checkpoint_short or args.checkpoint
    if not long_path or not short_path:
        raise EcgdxError("provide --checkpoint or both --checkpoint-long and "
                         "--checkpoint-short")
    return load_checkpoint(long_path), load_checkpoint(short_path)


def _cmd_predict(args) -> int:
    cmap = _load_classmap(args.classes)
    model_long, model_short = _load_models(args)
    records = [load_record(stem) for stem in _record_stems(args.data)]
    p_long = _predict_probs(model_long, records, args.target_fs, cmap)
    p_short = _predict_probs(model_short, records, args.target_fs, cmap)
    pred_sets = [postprocess(p_short[i], p_long[i], rec,
                             threshold=args.threshold, cmap=cmap)
                 for i, rec in enumerate(records)]
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(write_predictions(pred_sets, cmap))
    _write_manifest(args.out + ".manifest.txt", "predict", _manifest_options(args))
    return 0


def _cmd_relabel(args) -> int:
    cmap = _load_classmap(args.classes)
    model_long, model_short = _load_models(args)
    records = [load_record(stem) for stem in _record_stems(args.data)]
    p_long = _predict_probs(model_long, records, args.target_fs, cmap)
    p_short = _predict_probs(model_short, records, args.target_fs, cmap)
    fused = {rec.record_id: 0.5 * (p_long[i] + p_short[i])
             for i, rec in enumerate(records)}
    original = {c.strip() for c in args.original_codes.split(",") if c.strip()}
    report = relabel_pseudo(lambda rec: fused[rec.record_id], records,
                            original, cmap)
    with open(args.out, "w", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["record_id", "code", "abbreviation", "prob", "needs_review"])
        for item in report:
            writer.writerow([item.record_id, item.code, item.abbreviation,
                             repr(item.prob), int(item.needs_review)])
    _write_manifest(args.out + ".manifest.txt", "relabel", _manifest_options(args))
    return 0


def _load_truth(truth_dir: str, cmap: ClassMap) -> dict[str, np.ndarray]:
    out = {}
    for stem in _record_stems(truth_dir):
        rec = load_record(stem)
        out[rec.record_id] = labels_from_codes(rec.dx_codes, cmap)
    return out


def _aligned_arrays(pred_file: str, truth_dir: str, cmap: ClassMap):
    with open(pred_file, "r", encoding="utf-8") as fh:
        preds = read_predictions(fh.read(), cmap)
    truth_by_id = _load_truth(truth_dir, cmap)
    missing = [p.record_id for p in preds if p.record_id not in truth_by_id]
    if missing:
        raise EcgdxError(f"predictions reference unknown records: {missing}")
    truths = np.stack([truth_by_id[p.record_id] for p in preds])
    labels = np.stack([p.labels for p in preds])
    probs = np.stack([p.probs for p in preds])
    return labels, probs, truths


def _default_weights() -> RewardMatrix:
    text = resources.files("ecgdx.data").joinpath(
        "reward_weights.csv").read_text(encoding="utf-8")
    return RewardMatrix.from_csv(text)


def _write_per_class(path: str, cmap: ClassMap, metrics) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["abbreviation", "auc", "f1"])
        for abbr, auc, f1 in zip(cmap.abbreviations, metrics.auc, metrics.f1):
            writer.writerow([abbr, "" if np.isnan(auc) else repr(float(auc)),
                             repr(float(f1))])


def _cmd_score(args) -> int:
    cmap = _load_classmap(args.classes)
    labels, probs, truths = _aligned_arrays(args.pred, args.truth, cmap)
    weights = RewardMatrix.load(args.weights) if args.weights else _default_weights()
    report = challenge_score(labels, truths, weights, probs27=probs, cmap=cmap)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json(cmap.abbreviations) + "\n")
    metrics = per_class_metrics(probs, truths, labels=labels)
    _write_per_class(os.path.join(args.out, "per_class.csv"), cmap, metrics)
    _write_manifest(os.path.join(args.out, "manifest.txt"), "score",
                    _manifest_options(args))
    print(f"normalized_score={report.normalized}")
    return 0


def _cmd_report(args) -> int:
    cmap = _load_classmap(args.classes)
    labels, probs, truths = _aligned_arrays(args.pred, args.truth, cmap)
    metrics = per_class_metrics(probs, truths, labels=labels)
    os.makedirs(args.out, exist_ok=True)
    _write_per_class(os.path.join(args.out, "per_class.csv"), cmap, metrics)
    # long-format file ready for bar-chart tooling
    with open(os.path.join(args.out, "plot_data.csv"), "w", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["abbreviation", "metric", "value"])
        for abbr, auc in zip(cmap.abbreviations, metrics.auc):
            if not np.isnan(auc):
                writer.writerow([abbr, "auc", repr(float(auc))])
        for abbr, f1 in zip(cmap.abbreviations, metrics.f1):
            writer.writerow([abbr, "f1", repr(float(f1))])
    _write_manifest(os.path.join(args.out, "manifest.txt"), "report",
                    _manifest_options(args))
    return 0


# ----------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------

def _add_common(sub, classes=True, target_fs=False):
    if classes:
        sub.add_argument("--classes", default=None,
                         help="override the scored-class table (CSV)")
    if target_fs:
        sub.add_argument("--target-fs", type=int, default=500)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecgdx",
        description="ECG abnormality classification pipeline")
    parser.add_argument("--config", default=None,
                        help="flat key=value file preloading option defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic records")
    p.add_argument("--bpm", type=float, default=60.0)
    p.add_argument("--fs", type=int, default=500)
    p.add_argument("--duration", type=float, default=10.0)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--ectopic-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("preprocess", help="records -> feature tensors")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, choices=(10, 30), default=30)
    p.add_argument("--wavelet", default="bior2.6")
    p.add_argument("--level", type=int, default=8)
    p.add_argument("--no-denoise", action="store_true")
    _add_common(p, target_fs=True)
    p.set_defaults(func=_cmd_preprocess)

    p = sub.add_parser("rpeaks", help="print detected R peaks as CSV")
    p.add_argument("record", help="record path stem (without .hea/.dat)")
    p.set_defaults(func=_cmd_rpeaks)

    p = sub.add_parser("train", help="train a classifier on a record directory")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--window", type=int, choices=(10, 30), default=30)
    p.add_argument("--epochs", type=int, default=19)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--preset", choices=("small", "default"), default="default")
    p.add_argument("--no-denoise", action="store_true")
    _add_common(p, target_fs=True)
    p.set_defaults(func=_cmd_train)

    for name, fn in (("predict", _cmd_predict), ("relabel", _cmd_relabel)):
        p = sub.add_parser(name)
        p.add_argument("--data", required=True)
        p.add_argument("--checkpoint", default=None,
                       help="single checkpoint used for both windows")
        p.add_argument("--checkpoint-long", default=None)
        p.add_argument("--checkpoint-short", default=None)
        p.add_argument("--out", required=True)
        _add_common(p, target_fs=True)
        if name == "predict":
            p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
        else:
            p.add_argument("--original-codes", required=True,
                           help="comma-separated codes of the source label space")
        p.set_defaults(func=fn)

    p = sub.add_parser("score", help="score predictions against truth records")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--weights", default=None, help="reward matrix CSV")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("report", help="per-class AUC/F1 and plot data")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_report)
    return parser


def _apply_config_file(argv: list[str]) -> list[str]:
    """Insert defaults from a key=value file; explicit flags still win."""
    if "--config" not in argv:
        return argv
    idx = argv.index("--config")
    path = argv[idx + 1]
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            pairs.append((key.strip(), value.strip()))
    # config entries become leading flags so later explicit flags override
    injected: list[str] = []
    for key, value in pairs:
        injected.extend([f"--{key.replace('_', '-')}", value])
    head = argv[:idx] + argv[idx + 2:]
    if not head:
        return injected
    return [head[0]] + injected + head[1:]


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        argv = _apply_config_file(list(argv))
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except EcgdxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
