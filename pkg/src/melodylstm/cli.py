"""Command line interface: synth, prepare, train, eval, predict, inspect.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
Every tunable flag can also come from a JSON --config file; explicit CLI
flags win, and the merged configuration is dumped next to each run's outputs.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness, model, synth
from . import train as train_mod
from .encode import Vocabularies, encode_sequence, pad_batch
from .errors import DivergedError, MelodyLstmError
from .midi_io import parse_smf
from .preprocess import extract_features, pitch_name


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


DEFAULTS: dict[str, dict] = {
    "synth": {"out_dir": None, "seed": 0, "n_label0": 300, "n_label1": 300,
              "bars": 8, "ppq": 480, "bpm_low": 80.0, "bpm_high": 140.0,
              "jitter": 0.07},
    "prepare": {"data_dir": None, "out_dir": None, "seed": 0, "grid": 0.25,
                "val_fraction": 0.4, "no_quantize": False, "max_bars": 8},
    "train": {"data_dir": None, "out_dir": None, "seed": 0, "epochs": 100,
              "batch_size": 32, "lr": 1e-3, "bidirectional": False,
              "class_weights": None, "dropout": 0.4, "patience": 10,
              "hidden1": 64, "hidden2": 8, "precision": "float64"},
    "eval": {"data_dir": None, "checkpoint": None, "threshold": 0.5,
             "split": "val", "out_dir": None},
    "predict": {"checkpoint": None, "vocab": None, "threshold": 0.5},
    "inspect": {"grid": 0.25, "no_quantize": False, "max_bars": 8},
}

_REQUIRED: dict[str, tuple[str, ...]] = {
    "synth": ("out_dir",),
    "prepare": ("data_dir", "out_dir"),
    "train": ("data_dir", "out_dir"),
    "eval": ("data_dir", "checkpoint"),
    "predict": ("checkpoint", "vocab"),
    "inspect": (),
}


def _merge_options(command: str, args: argparse.Namespace) -> dict:
    merged = dict(DEFAULTS[command])
    ns = dict(vars(args))
    ns.pop("func", None)
    ns.pop("command", None)
    config_path = ns.pop("config", None)
    if config_path is not None:
        try:
            file_conf = json.loads(Path(config_path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {config_path}: {exc}") from exc
        if not isinstance(file_conf, dict):
            raise UsageError(f"config {config_path} must hold a JSON object")
        unknown = set(file_conf) - set(merged)
        if unknown:
            raise UsageError(
                f"config keys not recognized for '{command}': {sorted(unknown)}")
        merged.update(file_conf)
    merged.update(ns)
    for key in _REQUIRED[command]:
        if merged.get(key) is None:
            flag = "--" + key.replace("_", "-")
            raise UsageError(f"{flag} is required (flag or config file)")
    return merged


def _dump_run_config(out_dir: Path, command: str, opts: dict) -> None:
    record = {"command": command}
    record.update({k: v for k, v in opts.items() if k != "files"})
    with open(out_dir / "run_config.json", "w") as fh:
        json.dump(record, fh, indent=2, default=str)
        fh.write("\n")


def _parse_class_weights(text):
    if text is None:
        return None, None
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError("--class-weights expects 'W0,W1'")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError as exc:
        raise UsageError(f"--class-weights expects numbers: {exc}") from exc


def cmd_synth(opts: dict) -> int:
    out = Path(opts["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    config = synth.SynthConfig(
        seed=opts["seed"], n_label0=opts["n_label0"], n_label1=opts["n_label1"],
        bars=opts["bars"], ppq=opts["ppq"], bpm_low=opts["bpm_low"],
        bpm_high=opts["bpm_high"], jitter_beats=opts["jitter"])
    entries = synth.write_corpus(config, out)
    _dump_run_config(out, "synth", opts)
    print(json.dumps({"written": len(entries), "out_dir": str(out)}))
    return 0


def cmd_prepare(opts: dict) -> int:
    out = Path(opts["out_dir"])
    report = harness.prepare_dataset(
        opts["data_dir"], out, grid_step=opts["grid"],
        val_fraction=opts["val_fraction"], seed=opts["seed"],
        quantize_grid=not opts["no_quantize"], max_bars=opts["max_bars"])
    _dump_run_config(out, "prepare", opts)
    print(json.dumps(report, indent=2))
    return 0


def cmd_train(opts: dict) -> int:
    out = Path(opts["out_dir"])
    w0, w1 = _parse_class_weights(opts["class_weights"])  # fail before any IO
    out.mkdir(parents=True, exist_ok=True)
    vocab, train_batch, val_batch = harness.load_prepared(opts["data_dir"])
    config = train_mod.TrainConfig(
        epochs=opts["epochs"], batch_size=opts["batch_size"],
        learning_rate=opts["lr"], seed=opts["seed"],
        class_weight_0=w0, class_weight_1=w1,
        early_stop_patience=opts["patience"], dropout_rate=opts["dropout"],
        hidden1=opts["hidden1"], hidden2=opts["hidden2"],
        bidirectional=opts["bidirectional"], precision=opts["precision"])
    _dump_run_config(out, "train", opts)
    try:
        params, history = train_mod.train(train_batch, val_batch, config)
    except DivergedError as exc:
        if exc.params is not None:
            (out / "checkpoint.json").write_bytes(
                model.save_checkpoint(exc.params, vocab.digest()))
        if exc.history:
            (out / "history.csv").write_text(
                train_mod.history_to_csv(exc.history))
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 3
    (out / "checkpoint.json").write_bytes(
        model.save_checkpoint(params, vocab.digest()))
    (out / "history.csv").write_text(train_mod.history_to_csv(history))
    best = max(row.val_acc for row in history)
    print(json.dumps({"epochs_run": len(history), "best_val_acc": best,
                      "checkpoint": str(out / "checkpoint.json")}))
    return 0


def cmd_eval(opts: dict) -> int:
    vocab, train_batch, val_batch = harness.load_prepared(opts["data_dir"])
    batch = train_batch if opts["split"] == "train" else val_batch
    params, _ = model.load_checkpoint(
        Path(opts["checkpoint"]).read_bytes(),
        expected_vocab_digest=vocab.digest())
    preds = model.predict(params, batch, threshold=opts["threshold"])
    metrics = harness.evaluate([label for label, _ in preds],
                               [int(y) for y in batch.labels])
    text = json.dumps(metrics.as_dict(), indent=2)
    if opts.get("out_dir"):
        out = Path(opts["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(text + "\n")
        _dump_run_config(out, "eval", opts)
    print(text)
    return 0


def cmd_predict(opts: dict) -> int:
    vocab = Vocabularies.load(opts["vocab"])
    params, _ = model.load_checkpoint(
        Path(opts["checkpoint"]).read_bytes(),
        expected_vocab_digest=vocab.digest())
    encoded = []
    for path in opts["files"]:
        midi = parse_smf(Path(path).read_bytes())
        melody = extract_features(midi, grid_step=vocab.grid_step,
                                  source_id=str(path))
        encoded.append(encode_sequence(melody, vocab))
    batch = pad_batch(encoded, vocab.max_len)
    results = model.predict(params, batch, threshold=opts["threshold"])
    for path, (label, prob) in zip(opts["files"], results):
        print(json.dumps({"path": str(path), "label": label, "prob": prob}))
    return 0


def cmd_inspect(opts: dict) -> int:
    path = Path(opts["file"])
    midi = parse_smf(path.read_bytes())
    melody = extract_features(midi, grid_step=opts["grid"],
                              quantize_grid=not opts["no_quantize"],
                              source_id=path.name, max_bars=opts["max_bars"])
    print(f"# {path.name}: {len(melody.rows)} notes, "
          f"beats_per_bar={melody.beats_per_bar}")
    print("bar  pitch  position  duration")
    for bar, row in zip(melody.bar_indices, melody.rows):
        print(f"{bar:>3}  {pitch_name(row.pitch):<5} {row.position!r:>9} "
              f" {row.duration!r}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="melodylstm",
                     description="Classify monophonic MIDI melodies as "
                                 "human-composed or machine-generated.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True
    S = argparse.SUPPRESS

    p = sub.add_parser("synth", help="generate a labeled synthetic corpus")
    p.add_argument("--out-dir", dest="out_dir", default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--n-label0", dest="n_label0", type=int, default=S)
    p.add_argument("--n-label1", dest="n_label1", type=int, default=S)
    p.add_argument("--bars", type=int, default=S)
    p.add_argument("--ppq", type=int, default=S)
    p.add_argument("--bpm-low", dest="bpm_low", type=float, default=S)
    p.add_argument("--bpm-high", dest="bpm_high", type=float, default=S)
    p.add_argument("--jitter", type=float, default=S)
    p.add_argument("--config", default=S)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="parse, preprocess, split and encode")
    p.add_argument("--data-dir", dest="data_dir", default=S)
    p.add_argument("--out-dir", dest="out_dir", default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--grid", type=float, default=S)
    p.add_argument("--val-fraction", dest="val_fraction", type=float, default=S)
    p.add_argument("--no-quantize", dest="no_quantize", action="store_true",
                   default=S, help="keep micro-timing on a 16x finer grid")
    p.add_argument("--max-bars", dest="max_bars", type=int, default=S)
    p.add_argument("--config", default=S)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="fit the classifier on a prepared dataset")
    p.add_argument("--data-dir", dest="data_dir", default=S)
    p.add_argument("--out-dir", dest="out_dir", default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--epochs", type=int, default=S)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=S)
    p.add_argument("--lr", type=float, default=S)
    p.add_argument("--bidirectional", action="store_true", default=S)
    p.add_argument("--class-weights", dest="class_weights", default=S,
                   help="'W0,W1'; default balances by inverse class frequency")
    p.add_argument("--dropout", type=float, default=S)
    p.add_argument("--patience", type=int, default=S)
    p.add_argument("--hidden1", type=int, default=S)
    p.add_argument("--hidden2", type=int, default=S)
    p.add_argument("--precision", choices=("float64", "float32"), default=S)
    p.add_argument("--config", default=S)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics of a checkpoint on a split")
    p.add_argument("--data-dir", dest="data_dir", default=S)
    p.add_argument("--checkpoint", default=S)
    p.add_argument("--threshold", type=float, default=S)
    p.add_argument("--split", choices=("train", "val"), default=S)
    p.add_argument("--out-dir", dest="out_dir", default=S)
    p.add_argument("--config", default=S)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="label MIDI files with a checkpoint")
    p.add_argument("files", nargs="+", metavar="MIDI")
    p.add_argument("--checkpoint", default=S)
    p.add_argument("--vocab", default=S)
    p.add_argument("--threshold", type=float, default=S)
    p.add_argument("--config", default=S)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("inspect", help="print a file's feature matrix")
    p.add_argument("file", metavar="MIDI")
    p.add_argument("--grid", type=float, default=S)
    p.add_argument("--no-quantize", dest="no_quantize", action="store_true",
                   default=S)
    p.add_argument("--max-bars", dest="max_bars", type=int, default=S)
    p.add_argument("--config", default=S)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = _merge_options(args.command, args)
        return args.func(opts)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (MelodyLstmError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
