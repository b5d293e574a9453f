"""Dataset splitting, metrics, and the prepare step gluing parser to encoder."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encode import Batch, Vocabularies, build_vocab, encode_sequence, pad_batch
from .errors import EmptyCorpusError, LengthMismatchError, MelodyLstmError, TooFewItemsError
from .midi_io import parse_smf
from .preprocess import (
    DEFAULT_GRID,
    FINE_GRID_DIVISOR,
    MAX_BARS,
    MelodySequence,
    extract_features,
    melody_from_dict,
    melody_to_dict,
)
from .seeding import derive_seed


@dataclass
class Metrics:
    """Confusion counts and derived rates, with label 1 as the positive class."""

    tp: int
    fp: int
    tn: int
    fn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    degenerate: bool  # a precision or recall denominator was zero

    def as_dict(self) -> dict:
        return {
            "tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
            "accuracy": self.accuracy, "precision": self.precision,
            "recall": self.recall, "f1": self.f1, "degenerate": self.degenerate,
        }


def evaluate(preds, labels) -> Metrics:
    preds = list(preds)
    labels = list(labels)
    if not labels or len(preds) != len(labels):
        raise LengthMismatchError(
            f"{len(preds)} predictions against {len(labels)} labels")
    tp = fp = tn = fn = 0
    for p, y in zip(preds, labels):
        if p == 1 and y == 1:
            tp += 1
        elif p == 1:
            fp += 1
        elif y == 1:
            fn += 1
        else:
            tn += 1
    degenerate = (tp + fp) == 0 or (tp + fn) == 0
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics(tp, fp, tn, fn, (tp + tn) / len(labels),
                   precision, recall, f1, degenerate)


def split(items, val_fraction: float = 0.4, seed: int = 0, label_of=None):
    """Stratified, seeded train/validation partition of arbitrary items."""
    if not 0.0 < val_fraction < 1.0:
        raise TooFewItemsError(
            f"validation fraction {val_fraction} leaves an empty split")
    if label_of is None:
        label_of = lambda item: item["label"]
    items = list(items)
    by_label: dict = {}
    for i, item in enumerate(items):
        by_label.setdefault(label_of(item), []).append(i)
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "split")))
    val_idx: set[int] = set()
    for label in sorted(by_label):
        idxs = by_label[label]
        n_val = int(len(idxs) * val_fraction + 0.5)
        if n_val == 0 or n_val == len(idxs):
            raise TooFewItemsError(
                f"label {label!r} has {len(idxs)} items; fraction "
                f"{val_fraction} cannot populate both splits")
        for j in rng.permutation(len(idxs))[:n_val]:
            val_idx.add(idxs[j])
    train = [item for i, item in enumerate(items) if i not in val_idx]
    val = [item for i, item in enumerate(items) if i in val_idx]
    return train, val


def _discover(data_dir: Path) -> list[tuple[str, int]]:
    """(relative path, label) pairs from manifest.jsonl or label0/label1 trees."""
    manifest = data_dir / "manifest.jsonl"
    if manifest.exists():
        items = []
        with open(manifest) as fh:
            for line in fh:
                if line.strip():
                    entry = json.loads(line)
                    items.append((entry["path"], int(entry["label"])))
        return items
    items = []
    for label in (0, 1):
        base = data_dir / f"label{label}"
        items.extend((str(p.relative_to(data_dir)), label)
                     for p in sorted(base.glob("*.mid")))
    return items


def _grid_occupancy(melodies, labels, coarse_step: float) -> dict[str, float]:
    """Per label: fraction of note positions landing on the coarse grid."""
    on = {0: 0, 1: 0}
    total = {0: 0, 1: 0}
    for melody, label in zip(melodies, labels):
        for row in melody.rows:
            ratio = row.position / coarse_step
            on[label] += int(abs(ratio - round(ratio)) < 1e-9)
            total[label] += 1
    return {f"label{label}": (on[label] / total[label] if total[label] else 0.0)
            for label in (0, 1)}


def prepare_dataset(data_dir, out_dir, *, grid_step: float = DEFAULT_GRID,
                    val_fraction: float = 0.4, seed: int = 0,
                    quantize_grid: bool = True, max_bars: int = MAX_BARS) -> dict:
    """Parse, preprocess, split, build the vocabulary, and encode a corpus.

    Writes features.jsonl, vocab.json and prepare_report.json under out_dir.
    The vocabulary is built from the training split only; validation-only
    durations fall into the out-of-vocabulary slot.
    """
    data = Path(data_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    items = _discover(data)
    if not items:
        raise EmptyCorpusError(f"no MIDI files found under {data}")
    train_items, val_items = split(items, val_fraction, seed,
                                   label_of=lambda it: it[1])
    assignment = {path: "train" for path, _ in train_items}
    assignment.update({path: "val" for path, _ in val_items})

    melodies: list[MelodySequence] = []
    labels: list[int] = []
    splits: list[str] = []
    skipped: list[dict] = []
    warning_count = 0
    for rel, label in items:
        try:
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                midi = parse_smf((data / rel).read_bytes())
                melody = extract_features(midi, grid_step=grid_step,
                                          quantize_grid=quantize_grid,
                                          source_id=rel, max_bars=max_bars)
            warning_count += len(caught)
        except MelodyLstmError as exc:
            skipped.append({"path": rel, "reason": str(exc)})
            continue
        melodies.append(melody)
        labels.append(label)
        splits.append(assignment[rel])

    train_melodies = [m for m, s in zip(melodies, splits) if s == "train"]
    if not train_melodies or "val" not in splits:
        raise EmptyCorpusError("a split ended up empty after preprocessing")

    effective_grid = grid_step if quantize_grid else grid_step / FINE_GRID_DIVISOR
    beats_per_bar = max(m.beats_per_bar for m in train_melodies)
    vocab = build_vocab(train_melodies, grid_step=effective_grid,
                        beats_per_bar=beats_per_bar)
    vocab.save(out / "vocab.json")

    with open(out / "features.jsonl", "w") as fh:
        for melody, label, part in zip(melodies, labels, splits):
            record = melody_to_dict(melody)
            record["label"] = label
            record["split"] = part
            fh.write(json.dumps(record) + "\n")

    occupancy = _grid_occupancy(melodies, labels, grid_step)
    label_counts = {f"label{label}": labels.count(label) for label in (0, 1)}
    report = {
        "files": len(items),
        "prepared": len(melodies),
        "skipped": skipped,
        "parse_warnings": warning_count,
        "train": splits.count("train"),
        "val": splits.count("val"),
        "label_counts": label_counts,
        "grid_step": grid_step,
        "quantize": quantize_grid,
        "effective_grid_step": effective_grid,
        "grid_occupancy": occupancy,
        "grid_shortcut_suspected":
            abs(occupancy["label0"] - occupancy["label1"]) > 0.25,
        "max_len": vocab.max_len,
        "step_size": vocab.step_size,
        "vocab_digest": vocab.digest(),
    }
    with open(out / "prepare_report.json", "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return report


def load_prepared(prepared_dir) -> tuple[Vocabularies, Batch, Batch]:
    """Read vocab.json + features.jsonl back into padded train/val batches."""
    prepared = Path(prepared_dir)
    vocab = Vocabularies.load(prepared / "vocab.json")
    buckets = {"train": [], "val": []}
    with open(prepared / "features.jsonl") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            melody = melody_from_dict(record)
            buckets[record["split"]].append(
                encode_sequence(melody, vocab, label=int(record["label"])))
    if not buckets["train"] or not buckets["val"]:
        raise EmptyCorpusError("prepared dataset is missing a split")
    return (vocab,
            pad_batch(buckets["train"], vocab.max_len),
            pad_batch(buckets["val"], vocab.max_len))
