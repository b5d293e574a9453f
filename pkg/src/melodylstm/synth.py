"""Deterministic synthetic MIDI corpus with two separable styles.

Label 1 files imitate composed melodies: bounded diatonic random walks with
note values from a small set, every onset on the sixteenth grid.  Label 0
files imitate algorithmic output: uniform chromatic steps, continuous
durations, and onsets jittered off the grid.  Every file is produced from
scratch as real SMF bytes so the whole parsing pipeline gets exercised.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvariantViolationError
from .midi_io import MidiFile, NoteEvent, notes_to_midifile, write_smf
from .seeding import derive_seed

MAJOR_SCALE = (0, 2, 4, 5, 7, 9, 11)
NOTE_VALUES = (0.5, 1.0, 2.0)
NOTE_VALUE_WEIGHTS = (0.45, 0.4, 0.15)
REST_CHANCE = 0.08


@dataclass
class SynthConfig:
    seed: int = 0
    n_label0: int = 300
    n_label1: int = 300
    bars: int = 8
    ppq: int = 480
    bpm_low: float = 80.0
    bpm_high: float = 140.0
    jitter_beats: float = 0.07  # label-0 onset perturbation
    scale: tuple[int, ...] = MAJOR_SCALE

    def validate(self) -> None:
        if min(self.n_label0, self.n_label1) < 0:
            raise InvariantViolationError("file counts must be >= 0")
        if self.jitter_beats < 0:
            raise InvariantViolationError("jitter must be >= 0")
        if self.bars < 1 or self.ppq < 1:
            raise InvariantViolationError("bars and ppq must be >= 1")
        if not 0 < self.bpm_low <= self.bpm_high:
            raise InvariantViolationError("need 0 < bpm_low <= bpm_high")


def _tempo_us(bpm: float) -> int:
    return int(round(60_000_000.0 / bpm))


def _gen_label1(config: SynthConfig, index: int) -> tuple[MidiFile, float]:
    rng = np.random.Generator(np.random.PCG64(
        derive_seed(config.seed, f"label1:{index}")))
    bpm = float(rng.uniform(config.bpm_low, config.bpm_high))
    # three octaves of the configured scale, centered on middle C
    pool = sorted(12 * (octave + 1) + pc
                  for octave in (3, 4, 5) for pc in config.scale)
    pos = pool.index(60) + int(rng.integers(-3, 4))
    total = config.bars * 4.0
    onset = 0.0
    notes: list[NoteEvent] = []
    while onset < total - 1e-9:
        remaining = total - onset
        value = float(rng.choice(NOTE_VALUES, p=NOTE_VALUE_WEIGHTS))
        if value > remaining:
            value = 1.0 if remaining >= 1.5 else remaining
        if rng.random() < REST_CHANCE and remaining - value >= 1.0:
            onset += value  # rest; a note always follows
            continue
        notes.append(NoteEvent(pool[pos], int(round(onset * config.ppq)),
                               int(round(value * config.ppq))))
        onset += value
        pos = min(max(pos + int(rng.integers(-2, 3)), 0), len(pool) - 1)
    midi = notes_to_midifile(notes, ppq=config.ppq, format=1,
                             tempo_us=_tempo_us(bpm))
    return midi, bpm


def _gen_label0(config: SynthConfig, index: int) -> tuple[MidiFile, float]:
    rng = np.random.Generator(np.random.PCG64(
        derive_seed(config.seed, f"label0:{index}")))
    bpm = float(rng.uniform(config.bpm_low, config.bpm_high))
    total = config.bars * 4.0
    pitch = 60 + int(rng.integers(-6, 7))
    nominal = 0.0
    notes: list[NoteEvent] = []
    while nominal < total - 0.25:
        duration = float(rng.uniform(0.2, 1.8))
        onset = max(0.0, nominal + float(rng.uniform(-config.jitter_beats,
                                                     config.jitter_beats)))
        notes.append(NoteEvent(pitch, int(round(onset * config.ppq)),
                               max(1, int(round(duration * config.ppq)))))
        pitch = min(96, max(36, pitch + int(rng.integers(-7, 8))))
        # nominal rhythm stays on the grid; the jitter above is what
        # pushes the written events off it
        nominal += max(0.25, round(duration * 4.0) / 4.0)
    midi = notes_to_midifile(notes, ppq=config.ppq, format=0,
                             tempo_us=_tempo_us(bpm))
    return midi, bpm


def gen_label1(config: SynthConfig, index: int) -> MidiFile:
    """On-grid diatonic walk; deterministic in (config.seed, index)."""
    return _gen_label1(config, index)[0]


def gen_label0(config: SynthConfig, index: int) -> MidiFile:
    """Off-grid chromatic walk; deterministic in (config.seed, index)."""
    return _gen_label0(config, index)[0]


def write_corpus(config: SynthConfig, out_dir) -> list[dict]:
    """Write label0/, label1/ and manifest.jsonl; returns the manifest entries."""
    config.validate()
    out = Path(out_dir)
    entries = []
    for label, count, gen in ((0, config.n_label0, _gen_label0),
                              (1, config.n_label1, _gen_label1)):
        sub = out / f"label{label}"
        sub.mkdir(parents=True, exist_ok=True)
        for i in range(count):
            midi, bpm = gen(config, i)
            rel = f"label{label}/melody_{i:04d}.mid"
            (out / rel).write_bytes(write_smf(midi))
            entries.append({"path": rel, "label": label,
                            "seed": config.seed, "bpm": round(bpm, 3)})
    with open(out / "manifest.jsonl", "w") as fh:
        for entry in entries:
            fh.write(json.dumps(entry) + "\n")
    return entries
