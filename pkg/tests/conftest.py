"""Shared fixtures and the acceptance-criteria summary printer."""
from __future__ import annotations

import numpy as np
import pytest

from melodylstm.midi_io import NoteEvent, notes_to_midifile, write_smf

ACCEPTANCE_RESULTS: list[tuple[int, str, bool]] = []


def record_criterion(number: int, description: str, ok: bool) -> None:
    ACCEPTANCE_RESULTS.append((number, description, ok))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, description, ok in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {number:>2}: {status} - {description}")


def make_four_note_file() -> bytes:
    """C4 quarter, E4 eighth, G4 eighth, C5 half at 120 BPM, ppq 480."""
    notes = [
        NoteEvent(60, 0, 480),
        NoteEvent(64, 480, 240),
        NoteEvent(67, 720, 240),
        NoteEvent(72, 960, 960),
    ]
    return write_smf(notes_to_midifile(notes, ppq=480, tempo_us=500_000))


@pytest.fixture
def four_note_bytes() -> bytes:
    return make_four_note_file()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
