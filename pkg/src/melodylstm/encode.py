"""One-hot sequence encoding.

Each feature row becomes the concatenation of three one-hot blocks
(pitch | position | duration); sequences are padded with all-zero steps to the
training set's maximum length.  The duration vocabulary is open (reserved
out-of-vocabulary token); pitch and position are closed sets by construction.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCorpusError, SequenceTruncatedWarning, UnknownPositionError
from .preprocess import FeatureRow, MelodySequence

VOCAB_VERSION = 1
N_PITCHES = 128

# tolerance for "is this value a grid multiple", relative to the grid step
_GRID_TOL = 1e-6


@dataclass
class Vocabularies:
    """Token tables for the three features plus the frozen padding length."""

    grid_step: float
    beats_per_bar: float
    positions: list[float]
    durations: list[float]  # without the OOV slot; OOV index = len(durations)
    max_len: int
    pitches: list[int] = field(default_factory=lambda: list(range(N_PITCHES)))

    def __post_init__(self):
        self._duration_index = {
            round(d / self.grid_step): i for i, d in enumerate(self.durations)
        }

    @property
    def pitch_size(self) -> int:
        return len(self.pitches)

    @property
    def position_size(self) -> int:
        return len(self.positions)

    @property
    def duration_size(self) -> int:
        return len(self.durations) + 1  # + OOV

    @property
    def step_size(self) -> int:
        return self.pitch_size + self.position_size + self.duration_size

    @property
    def oov_duration_index(self) -> int:
        return len(self.durations)

    def position_index(self, position: float) -> int:
        idx = round(position / self.grid_step)
        if (abs(position - idx * self.grid_step) > self.grid_step * _GRID_TOL
                or not 0 <= idx < self.position_size):
            raise UnknownPositionError(
                f"position {position} is not on the {self.grid_step} grid"
            )
        return idx

    def duration_index(self, duration: float) -> int:
        key = round(duration / self.grid_step)
        if abs(duration - key * self.grid_step) > self.grid_step * _GRID_TOL:
            return self.oov_duration_index
        return self._duration_index.get(key, self.oov_duration_index)

    def to_dict(self) -> dict:
        return {
            "version": VOCAB_VERSION,
            "grid_step": self.grid_step,
            "beats_per_bar": self.beats_per_bar,
            "pitch": self.pitches,
            "positions": self.positions,
            "durations": self.durations,
            "max_len": self.max_len,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabularies":
        if d.get("version") != VOCAB_VERSION:
            raise ValueError(f"unsupported vocab version: {d.get('version')}")
        return cls(
            grid_step=float(d["grid_step"]),
            beats_per_bar=float(d["beats_per_bar"]),
            positions=[float(p) for p in d["positions"]],
            durations=[float(x) for x in d["durations"]],
            max_len=int(d["max_len"]),
            pitches=[int(p) for p in d["pitch"]],
        )

    def digest(self) -> str:
        """Stable fingerprint used to pair checkpoints with vocabularies."""
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Vocabularies":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass
class EncodedSequence:
    steps: np.ndarray  # [length, step_size] uint8
    length: int
    label: int | None = None


@dataclass
class Batch:
    """Sequences padded to a common length, ready for the model."""

    x: np.ndarray              # [n, max_len, step_size] uint8
    lengths: np.ndarray        # [n] int64
    labels: np.ndarray | None  # [n] int64, or None for unlabeled data

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def max_len(self) -> int:
        return self.x.shape[1]

    @property
    def step_size(self) -> int:
        return self.x.shape[2]

    def take(self, indices) -> "Batch":
        labels = None if self.labels is None else self.labels[indices]
        return Batch(self.x[indices], self.lengths[indices], labels)


def build_vocab(
    corpus: list[MelodySequence],
    grid_step: float,
    beats_per_bar: float,
) -> Vocabularies:
    """Construct vocabularies and freeze max_len from a training corpus."""
    if not corpus:
        raise EmptyCorpusError("cannot build a vocabulary from an empty corpus")
    n_positions = math.floor((beats_per_bar - beats_per_bar * 1e-12) / grid_step) + 1
    positions = [k * grid_step for k in range(n_positions)]
    duration_keys = sorted({
        round(row.duration / grid_step)
        for seq in corpus for row in seq.rows
        if abs(row.duration - round(row.duration / grid_step) * grid_step)
        <= grid_step * _GRID_TOL
    })
    durations = [k * grid_step for k in duration_keys]
    max_len = max(len(seq.rows) for seq in corpus)
    return Vocabularies(
        grid_step=grid_step,
        beats_per_bar=beats_per_bar,
        positions=positions,
        durations=durations,
        max_len=max_len,
    )


def encode_row(row: FeatureRow, vocab: Vocabularies) -> np.ndarray:
    step = np.zeros(vocab.step_size, dtype=np.uint8)
    step[row.pitch] = 1
    step[vocab.pitch_size + vocab.position_index(row.position)] = 1
    step[vocab.pitch_size + vocab.position_size + vocab.duration_index(row.duration)] = 1
    return step


def decode_step(step: np.ndarray, vocab: Vocabularies) -> FeatureRow:
    """Inverse of encode_row for non-pad steps (OOV durations decode to nan)."""
    p_stop = vocab.pitch_size
    b_stop = p_stop + vocab.position_size
    hot = np.flatnonzero(step)
    if len(hot) != 3:
        raise ValueError(f"expected exactly 3 hot indices, got {len(hot)}")
    pitch = int(hot[0])
    position = vocab.positions[int(hot[1]) - p_stop]
    dur_idx = int(hot[2]) - b_stop
    duration = (math.nan if dur_idx == vocab.oov_duration_index
                else vocab.durations[dur_idx])
    return FeatureRow(pitch, position, duration)


def pad_batch(seqs: list[EncodedSequence], max_len: int) -> Batch:
    """Zero-pad (or truncate, with a warning) sequences to max_len."""
    if not seqs:
        raise EmptyCorpusError("cannot pad an empty batch")
    dim = seqs[0].steps.shape[1]
    x = np.zeros((len(seqs), max_len, dim), dtype=np.uint8)
    lengths = np.zeros(len(seqs), dtype=np.int64)
    labels = np.zeros(len(seqs), dtype=np.int64)
    have_labels = all(s.label is not None for s in seqs)
    for i, seq in enumerate(seqs):
        length = seq.length
        if length > max_len:
            warnings.warn(
                f"sequence of length {length} truncated to max_len {max_len}",
                SequenceTruncatedWarning,
            )
            length = max_len
        x[i, :length] = seq.steps[:length]
        lengths[i] = length
        if have_labels:
            labels[i] = seq.label
    return Batch(x, lengths, labels if have_labels else None)


def encode_sequence(seq: MelodySequence, vocab: Vocabularies,
                    label: int | None = None) -> EncodedSequence:
    """One-hot encode every row; length is the true (unpadded) step count."""
    steps = np.zeros((len(seq.rows), vocab.step_size), dtype=np.uint8)
    for i, row in enumerate(seq.rows):
        steps[i] = encode_row(row, vocab)
    return EncodedSequence(steps, len(seq.rows), label)


def dump_encoded_jsonl(path, seqs: list[EncodedSequence],
                       vocab: Vocabularies) -> None:
    """Sparse dump: per step, the three hot indices (pitch, position, duration)."""
    p_stop = vocab.pitch_size
    b_stop = p_stop + vocab.position_size
    with open(path, "w") as fh:
        for seq in seqs:
            triples = []
            for step in seq.steps:
                hot = np.flatnonzero(step)
                triples.append([
                    int(hot[hot < p_stop][0]),
                    int(hot[(hot >= p_stop) & (hot < b_stop)][0]) - p_stop,
                    int(hot[hot >= b_stop][0]) - b_stop,
                ])
            fh.write(json.dumps({
                "length": seq.length,
                "label": seq.label,
                "steps": triples,
            }) + "\n")
