import json
import warnings

import numpy as np
import pytest

from melodylstm.errors import InvariantViolationError
from melodylstm.midi_io import extract_notes, parse_smf, write_smf
from melodylstm.preprocess import extract_features, to_beats
from melodylstm.synth import (
    MAJOR_SCALE,
    NOTE_VALUES,
    SynthConfig,
    gen_label0,
    gen_label1,
    write_corpus,
)


def small_config(**kw):
    base = dict(seed=11, n_label0=6, n_label1=6, bars=8)
    base.update(kw)
    return SynthConfig(**base)


class TestLabel1:
    def test_parses_without_warnings(self):
        midi = gen_label1(small_config(), 0)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            again = parse_smf(write_smf(midi))
        assert extract_notes(again)[0]

    def test_pitches_stay_in_the_scale_pool(self):
        for index in range(6):
            midi = gen_label1(small_config(), index)
            for note in extract_notes(midi)[0]:
                assert 48 <= note.pitch <= 83
                assert note.pitch % 12 in MAJOR_SCALE

    def test_rhythm_is_on_grid_and_fills_the_bars(self):
        config = small_config()
        for index in range(6):
            midi = gen_label1(config, index)
            beats = to_beats(extract_notes(midi)[0], ppq=config.ppq)
            for note in beats:
                assert note.onset_beats * 2 == int(note.onset_beats * 2)
                assert note.duration_beats in NOTE_VALUES
            last = beats[-1]
            assert last.onset_beats + last.duration_beats == config.bars * 4

    def test_deterministic_per_index(self):
        a = write_smf(gen_label1(small_config(), 3))
        b = write_smf(gen_label1(small_config(), 3))
        assert a == b
        assert write_smf(gen_label1(small_config(), 4)) != a


class TestLabel0:
    def test_onsets_mostly_fall_off_the_grid(self):
        config = small_config()
        off = total = 0
        for index in range(6):
            beats = to_beats(extract_notes(gen_label0(config, index))[0],
                             ppq=config.ppq)
            for note in beats:
                total += 1
                snapped = round(note.onset_beats / 0.25) * 0.25
                off += abs(note.onset_beats - snapped) > 1e-9
        assert off / total > 0.9

    def test_quantization_repairs_the_grid(self):
        seq = extract_features(gen_label0(small_config(), 1), source_id="x")
        for row in seq.rows:
            assert row.position == round(row.position / 0.25) * 0.25

    def test_wider_leaps_than_label1(self):
        config = small_config(n_label0=12, n_label1=12)

        def mean_interval(gen):
            jumps = []
            for index in range(12):
                notes = extract_notes(gen(config, index))[0]
                jumps += [abs(b.pitch - a.pitch)
                          for a, b in zip(notes, notes[1:])]
            return np.mean(jumps)

        assert mean_interval(gen_label0) > mean_interval(gen_label1) + 1.0

    def test_deterministic_per_index(self):
        a = write_smf(gen_label0(small_config(), 2))
        assert write_smf(gen_label0(small_config(), 2)) == a


class TestWriteCorpus:
    def test_layout_and_manifest(self, tmp_path):
        entries = write_corpus(small_config(), tmp_path)
        assert len(entries) == 12
        labels = [e["label"] for e in entries]
        assert labels.count(0) == 6 and labels.count(1) == 6
        manifest = [json.loads(line) for line in
                    (tmp_path / "manifest.jsonl").read_text().splitlines()]
        assert manifest == entries
        for entry in entries:
            path = tmp_path / entry["path"]
            assert path.exists()
            assert path.parent.name == f"label{entry['label']}"

    def test_files_round_trip_bit_exact(self, tmp_path):
        write_corpus(small_config(n_label0=2, n_label1=2), tmp_path)
        for path in sorted(tmp_path.rglob("*.mid")):
            data = path.read_bytes()
            assert write_smf(parse_smf(data)) == data

    def test_rerun_is_byte_identical(self, tmp_path):
        first = tmp_path / "a"
        second = tmp_path / "b"
        write_corpus(small_config(), first)
        write_corpus(small_config(), second)
        for path in sorted(first.rglob("*")):
            if path.is_file():
                twin = second / path.relative_to(first)
                assert twin.read_bytes() == path.read_bytes(), path.name

    def test_tempo_is_drawn_per_file_within_range(self, tmp_path):
        entries = write_corpus(small_config(bpm_low=90, bpm_high=100),
                               tmp_path)
        bpms = {e["bpm"] for e in entries}
        assert len(bpms) > 1
        assert all(90 <= bpm <= 100 for bpm in bpms)


class TestConfigValidation:
    def test_negative_counts(self):
        with pytest.raises(InvariantViolationError):
            SynthConfig(n_label0=-1).validate()

    def test_bpm_order(self):
        with pytest.raises(InvariantViolationError):
            SynthConfig(bpm_low=140, bpm_high=80).validate()

    def test_negative_jitter(self):
        with pytest.raises(InvariantViolationError):
            SynthConfig(jitter_beats=-0.1).validate()
