"""Turn tick-domain notes into per-bar feature rows.

Pipeline per file: tick -> beat conversion, monophony enforcement, grid
quantization, 8-bar segmentation, and the (pitch, position-in-bar, duration)
feature mapping.  All times are in quarter-note units ("beats"); 1.0 is a
quarter note and position 0.0 is the downbeat of a bar.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import (
    EmptyAfterEnforcementError,
    MixedMeterError,
    TooShortError,
)
from .midi_io import MidiFile, NoteEvent, TempoMap, extract_notes, extract_time_signatures

DEFAULT_GRID = 0.25      # sixteenth-note grid
DEFAULT_BEATS_PER_BAR = 4.0
MAX_BARS = 8

# factor applied to the grid when quantization is disabled: feature values are
# still tokenized, but at a resolution fine enough to keep micro-timing intact
FINE_GRID_DIVISOR = 16

PITCH_NAMES = ["C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B"]


@dataclass
class BeatNote:
    pitch: int
    onset_beats: float
    duration_beats: float


@dataclass
class FeatureRow:
    pitch: int
    position: float
    duration: float


@dataclass
class MelodySequence:
    """Feature rows for one melody, at most MAX_BARS bars long."""

    rows: list[FeatureRow]
    bar_indices: list[int]
    source_id: str = ""
    beats_per_bar: float = DEFAULT_BEATS_PER_BAR
    short: bool = False


def pitch_name(pitch: int) -> str:
    """Display name with C4 = MIDI 60."""
    return f"{PITCH_NAMES[pitch % 12]}{pitch // 12 - 1}"


def to_beats(notes: list[NoteEvent], ppq: int,
             tempo: TempoMap | None = None) -> list[BeatNote]:
    """Exact tick -> beat conversion.

    The conversion is onset/ppq by definition of PPQ division and does not
    depend on tempo; the tempo map only matters for diagnostics (BPM) and for
    the synthetic generator's off-grid perturbation model.
    """
    del tempo  # kept in the signature for call-site symmetry
    return [
        BeatNote(n.pitch, n.onset_ticks / ppq, n.duration_ticks / ppq)
        for n in notes
    ]


def enforce_monophony(notes: list[BeatNote]) -> list[BeatNote]:
    """Resolve overlaps: same onset keeps the highest pitch, otherwise the
    earlier note is truncated at the later note's onset."""
    ordered = sorted(notes, key=lambda n: (n.onset_beats, n.pitch))
    collapsed: list[BeatNote] = []
    for note in ordered:
        if collapsed and collapsed[-1].onset_beats == note.onset_beats:
            collapsed[-1] = note  # sorted by pitch, so the later one is higher
        else:
            collapsed.append(BeatNote(note.pitch, note.onset_beats,
                                      note.duration_beats))
    out: list[BeatNote] = []
    for i, note in enumerate(collapsed):
        duration = note.duration_beats
        if i + 1 < len(collapsed):
            duration = min(duration, collapsed[i + 1].onset_beats - note.onset_beats)
        if duration > 0:
            out.append(BeatNote(note.pitch, note.onset_beats, duration))
    if not out:
        raise EmptyAfterEnforcementError("no notes left after monophony enforcement")
    return out


def quantize_value(x: float, grid_step: float) -> float:
    """Snap to the nearest grid multiple, ties rounding up."""
    return math.floor(x / grid_step + 0.5) * grid_step


def quantize(notes: list[BeatNote], grid_step: float = DEFAULT_GRID) -> list[BeatNote]:
    """Snap onsets and durations to the grid; durations clamp to >= one step."""
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    return [
        BeatNote(
            n.pitch,
            quantize_value(n.onset_beats, grid_step),
            max(quantize_value(n.duration_beats, grid_step), grid_step),
        )
        for n in notes
    ]


def segment_bars(
    notes: list[BeatNote],
    beats_per_bar: float = DEFAULT_BEATS_PER_BAR,
    source_id: str = "",
    max_bars: int = MAX_BARS,
) -> MelodySequence:
    """Assign notes to bars and map them to feature rows.

    Notes starting at or past `max_bars` bars are dropped; melodies covering
    fewer than `max_bars` bars are kept with short=True.
    """
    if not notes:
        raise TooShortError("empty melody")
    span = max(n.onset_beats + n.duration_beats for n in notes)
    if span < beats_per_bar:
        raise TooShortError(
            f"melody spans {span} beats, less than one {beats_per_bar}-beat bar"
        )
    rows: list[FeatureRow] = []
    bars: list[int] = []
    for note in notes:
        bar = int(note.onset_beats // beats_per_bar)
        if bar >= max_bars:
            continue
        rows.append(FeatureRow(note.pitch,
                               note.onset_beats - bar * beats_per_bar,
                               note.duration_beats))
        bars.append(bar)
    short = span < max_bars * beats_per_bar
    return MelodySequence(rows, bars, source_id=source_id,
                          beats_per_bar=beats_per_bar, short=short)


def beats_per_bar_of(file: MidiFile) -> float:
    """Beats per bar from the file's time signature (4/4 when absent)."""
    sigs = {(num, den) for _, num, den in extract_time_signatures(file)}
    if len(sigs) > 1:
        raise MixedMeterError(f"file declares multiple meters: {sorted(sigs)}")
    if not sigs:
        return DEFAULT_BEATS_PER_BAR
    num, den = next(iter(sigs))
    return num * 4.0 / den


def extract_features(
    file: MidiFile,
    grid_step: float = DEFAULT_GRID,
    quantize_grid: bool = True,
    source_id: str = "",
    max_bars: int = MAX_BARS,
) -> MelodySequence:
    """Full per-file pipeline from a parsed MidiFile to a MelodySequence.

    With quantize_grid=False the melody is snapped to a FINE_GRID_DIVISOR-times
    finer grid instead, preserving off-grid micro-timing while keeping feature
    values tokenizable.
    """
    notes, _tempo = extract_notes(file)
    beats_per_bar = beats_per_bar_of(file)
    step = grid_step if quantize_grid else grid_step / FINE_GRID_DIVISOR
    beat_notes = enforce_monophony(to_beats(notes, file.ppq))
    beat_notes = enforce_monophony(quantize(beat_notes, step))
    return segment_bars(beat_notes, beats_per_bar, source_id=source_id,
                        max_bars=max_bars)


# --- JSONL interchange ------------------------------------------------------

def melody_to_dict(seq: MelodySequence) -> dict:
    return {
        "source_id": seq.source_id,
        "bars": list(seq.bar_indices),
        "rows": [[r.pitch, r.position, r.duration] for r in seq.rows],
        "beats_per_bar": seq.beats_per_bar,
        "short": seq.short,
    }


def melody_from_dict(d: dict) -> MelodySequence:
    rows = [FeatureRow(int(p), float(pos), float(dur)) for p, pos, dur in d["rows"]]
    return MelodySequence(
        rows,
        [int(b) for b in d["bars"]],
        source_id=d.get("source_id", ""),
        beats_per_bar=float(d.get("beats_per_bar", DEFAULT_BEATS_PER_BAR)),
        short=bool(d.get("short", False)),
    )


def dump_melodies_jsonl(path, seqs: list[MelodySequence]) -> None:
    with open(path, "w") as fh:
        for seq in seqs:
            fh.write(json.dumps(melody_to_dict(seq)) + "\n")


def load_melodies_jsonl(path) -> list[MelodySequence]:
    with open(path) as fh:
        return [melody_from_dict(json.loads(line)) for line in fh if line.strip()]
