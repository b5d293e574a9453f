"""Standard MIDI File (SMF) reading and writing at the byte level.

Covers format 0 and 1 files with PPQ time division.  Parsing resolves running
status and normalizes note-on-with-velocity-0 to note-off; writing emits a
canonical form (explicit status on every event, note-offs as 0x80, minimal
VLQ delta-times) so that parse -> write -> parse is the identity.
"""

from __future__ import annotations

import struct
import warnings
from bisect import bisect_right
from dataclasses import dataclass, field

from .errors import (
    BadMagicError,
    DanglingNoteOnWarning,
    InvariantViolationError,
    MissingEndOfTrackWarning,
    NoNotesError,
    TruncatedChunkError,
    TruncatedInputError,
    UnsupportedDivisionError,
    UnsupportedFormatError,
    UnterminatedVlqError,
    ZeroLengthNoteWarning,
)

DEFAULT_TEMPO_US = 500_000  # SMF default: 120 BPM

META_TEMPO = 0x51
META_TIME_SIGNATURE = 0x58
META_END_OF_TRACK = 0x2F

NOTE_OFF = 0x80
NOTE_ON = 0x90

# status high nibbles that carry a single data byte
_ONE_BYTE_EVENTS = (0xC0, 0xD0)


@dataclass
class ChannelEvent:
    """A channel voice message with explicit status (no running status)."""

    delta: int
    status: int  # full status byte, 0x80..0xEF
    data: bytes


@dataclass
class MetaEvent:
    delta: int
    meta_type: int
    data: bytes


@dataclass
class SysExEvent:
    delta: int
    status: int  # 0xF0 or 0xF7
    data: bytes


TrackEvent = ChannelEvent | MetaEvent | SysExEvent
TrackChunk = list


@dataclass
class MidiFile:
    format: int
    ppq: int
    tracks: list[TrackChunk] = field(default_factory=list)


@dataclass
class NoteEvent:
    """One note in the tick domain."""

    pitch: int
    onset_ticks: int
    duration_ticks: int
    channel: int = 0


class TempoMap:
    """Tick-indexed tempo lookup with the SMF default at tick 0."""

    def __init__(self, entries: list[tuple[int, int]] | None = None):
        # stable sort on the tick alone: equal-tick entries keep file order
        entries = sorted(entries or [], key=lambda entry: entry[0])
        deduped: list[tuple[int, int]] = []
        for tick, us in entries:
            if deduped and deduped[-1][0] == tick:
                deduped[-1] = (tick, us)  # last event at a tick wins
            else:
                deduped.append((tick, us))
        if not deduped or deduped[0][0] > 0:
            deduped.insert(0, (0, DEFAULT_TEMPO_US))
        self.entries = deduped
        self._ticks = [t for t, _ in deduped]

    def us_per_quarter_at(self, tick: int) -> int:
        return self.entries[bisect_right(self._ticks, tick) - 1][1]

    def bpm_at(self, tick: int = 0) -> float:
        return 60_000_000.0 / self.us_per_quarter_at(tick)

    def __eq__(self, other):
        return isinstance(other, TempoMap) and self.entries == other.entries

    def __repr__(self):
        return f"TempoMap({self.entries!r})"


# --- variable-length quantities ----------------------------------------------

def read_vlq(data: bytes, offset: int = 0) -> tuple[int, int]:
    """Decode one variable-length quantity; returns (value, next_offset)."""
    value = 0
    for i in range(4):
        if offset + i >= len(data):
            raise TruncatedInputError(f"input ends mid-VLQ at offset {offset + i}")
        byte = data[offset + i]
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, offset + i + 1
    raise UnterminatedVlqError(f"VLQ at offset {offset} exceeds 4 bytes")


def write_vlq(value: int) -> bytes:
    """Encode a non-negative integer < 2**28 as a minimal-length VLQ."""
    if value < 0 or value > 0x0FFFFFFF:
        raise InvariantViolationError(f"VLQ value out of range: {value}")
    out = bytearray([value & 0x7F])
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


# --- parsing ------------------------------------------------------------------

def parse_smf(data: bytes) -> MidiFile:
    """Parse SMF bytes into a MidiFile with raw per-track event lists."""
    if len(data) < 14:
        raise TruncatedInputError("file shorter than an MThd header")
    if data[:4] != b"MThd":
        raise BadMagicError(f"expected MThd, got {data[:4]!r}")
    header_len = struct.unpack(">I", data[4:8])[0]
    if header_len < 6 or len(data) < 8 + header_len:
        raise TruncatedChunkError("MThd body shorter than declared")
    fmt, n_tracks, division = struct.unpack(">HHH", data[8:14])
    if fmt not in (0, 1):
        raise UnsupportedFormatError(f"SMF format {fmt} not supported")
    if division & 0x8000:
        raise UnsupportedDivisionError("SMPTE time division not supported")
    if division == 0:
        raise InvariantViolationError("ppq must be positive")

    tracks = []
    pos = 8 + header_len
    while len(tracks) < n_tracks and pos < len(data):
        if len(data) - pos < 8:
            raise TruncatedChunkError("chunk header truncated")
        chunk_type = data[pos:pos + 4]
        chunk_len = struct.unpack(">I", data[pos + 4:pos + 8])[0]
        body = data[pos + 8:pos + 8 + chunk_len]
        if len(body) < chunk_len:
            raise TruncatedChunkError(f"{chunk_type!r} chunk body truncated")
        if chunk_type == b"MTrk":
            tracks.append(_parse_track(body))
        # alien chunk types are skipped per the SMF spec
        pos += 8 + chunk_len
    if len(tracks) < n_tracks:
        raise TruncatedChunkError(
            f"header declares {n_tracks} tracks, found {len(tracks)}"
        )
    return MidiFile(format=fmt, ppq=division, tracks=tracks)


def _parse_track(body: bytes) -> TrackChunk:
    events: TrackChunk = []
    pos = 0
    running_status = None
    while pos < len(body):
        delta, pos = read_vlq(body, pos)
        if pos >= len(body):
            raise TruncatedInputError("track ends after a delta-time")
        first = body[pos]
        if first == 0xFF:
            meta_type = body[pos + 1] if pos + 1 < len(body) else None
            if meta_type is None:
                raise TruncatedInputError("meta event truncated")
            length, next_pos = read_vlq(body, pos + 2)
            payload = body[next_pos:next_pos + length]
            if len(payload) < length:
                raise TruncatedInputError("meta payload truncated")
            events.append(MetaEvent(delta, meta_type, payload))
            pos = next_pos + length
            if meta_type == META_END_OF_TRACK:
                return events
        elif first in (0xF0, 0xF7):
            length, next_pos = read_vlq(body, pos + 1)
            payload = body[next_pos:next_pos + length]
            if len(payload) < length:
                raise TruncatedInputError("sysex payload truncated")
            events.append(SysExEvent(delta, first, payload))
            running_status = None
            pos = next_pos + length
        else:
            if first & 0x80:
                status = first
                running_status = status
                pos += 1
            elif running_status is not None:
                status = running_status
            else:
                raise TruncatedChunkError("data byte with no running status")
            n_data = 1 if status & 0xF0 in _ONE_BYTE_EVENTS else 2
            payload = body[pos:pos + n_data]
            if len(payload) < n_data:
                raise TruncatedInputError("channel event truncated")
            pos += n_data
            if status & 0xF0 == NOTE_ON and payload[1] == 0:
                status = NOTE_OFF | (status & 0x0F)
            events.append(ChannelEvent(delta, status, payload))
    warnings.warn("track missing End-of-Track", MissingEndOfTrackWarning)
    events.append(MetaEvent(0, META_END_OF_TRACK, b""))
    return events


# --- writing ------------------------------------------------------------------

def write_smf(file: MidiFile) -> bytes:
    """Serialize to canonical SMF bytes (see module docstring)."""
    if not isinstance(file.ppq, int) or file.ppq <= 0:
        raise InvariantViolationError(f"ppq must be a positive int, got {file.ppq}")
    if file.ppq > 0x7FFF:
        raise InvariantViolationError("ppq does not fit PPQ time division")
    if file.format not in (0, 1):
        raise UnsupportedFormatError(f"format must be 0 or 1, got {file.format}")
    out = bytearray(struct.pack(">4sIHHH", b"MThd", 6, file.format,
                                len(file.tracks), file.ppq))
    for track in file.tracks:
        body = bytearray()
        has_eot = False
        for event in track:
            if event.delta < 0:
                raise InvariantViolationError("negative delta-time")
            body += write_vlq(event.delta)
            if isinstance(event, MetaEvent):
                body += bytes([0xFF, event.meta_type])
                body += write_vlq(len(event.data)) + event.data
                if event.meta_type == META_END_OF_TRACK:
                    has_eot = True
                    break
            elif isinstance(event, SysExEvent):
                body += bytes([event.status])
                body += write_vlq(len(event.data)) + event.data
            else:
                status, data = event.status, event.data
                if status & 0xF0 == NOTE_ON and data[1] == 0:
                    status = NOTE_OFF | (status & 0x0F)
                body += bytes([status]) + data
        if not has_eot:
            body += b"\x00\xFF\x2F\x00"
        out += struct.pack(">4sI", b"MTrk", len(body)) + bytes(body)
    return bytes(out)


# --- note extraction ----------------------------------------------------------

def extract_notes(file: MidiFile) -> tuple[list[NoteEvent], TempoMap]:
    """Extract note events (FIFO on/off matching) and the merged tempo map.

    Dangling note-ons are closed at end of track and zero-length notes are
    dropped; both are reported through the warnings machinery.
    """
    notes: list[NoteEvent] = []
    tempo_entries: list[tuple[int, int]] = []
    for track in file.tracks:
        open_notes: dict[tuple[int, int], list[int]] = {}
        tick = 0
        for event in track:
            tick += event.delta
            if isinstance(event, MetaEvent):
                if event.meta_type == META_TEMPO and len(event.data) == 3:
                    tempo_entries.append((tick, int.from_bytes(event.data, "big")))
                continue
            if not isinstance(event, ChannelEvent):
                continue
            kind = event.status & 0xF0
            channel = event.status & 0x0F
            if kind == NOTE_ON and event.data[1] > 0:
                open_notes.setdefault((channel, event.data[0]), []).append(tick)
            elif kind in (NOTE_OFF, NOTE_ON):
                key = (channel, event.data[0])
                queue = open_notes.get(key)
                if queue:
                    onset = queue.pop(0)
                    _append_note(notes, event.data[0], onset, tick, channel)
        for (channel, pitch), onsets in sorted(open_notes.items()):
            for onset in onsets:
                warnings.warn(
                    f"note-on pitch {pitch} at tick {onset} never released; "
                    "closing at end of track",
                    DanglingNoteOnWarning,
                )
                _append_note(notes, pitch, onset, tick, channel)
    if not notes:
        raise NoNotesError("file contains no notes")
    notes.sort(key=lambda n: (n.onset_ticks, n.pitch))
    return notes, TempoMap(tempo_entries)


def _append_note(notes, pitch, onset, off_tick, channel):
    if off_tick <= onset:
        warnings.warn(
            f"zero-length note pitch {pitch} at tick {onset} dropped",
            ZeroLengthNoteWarning,
        )
        return
    notes.append(NoteEvent(pitch, onset, off_tick - onset, channel))


def extract_time_signatures(file: MidiFile) -> list[tuple[int, int, int]]:
    """All time-signature meta events as (tick, numerator, denominator)."""
    sigs = []
    for track in file.tracks:
        tick = 0
        for event in track:
            tick += event.delta
            if (isinstance(event, MetaEvent)
                    and event.meta_type == META_TIME_SIGNATURE
                    and len(event.data) >= 2):
                sigs.append((tick, event.data[0], 1 << event.data[1]))
    sigs.sort()
    return sigs


# --- construction helper --------------------------------------------------

def notes_to_midifile(
    notes: list[NoteEvent],
    ppq: int = 480,
    format: int = 1,
    tempo_us: int = DEFAULT_TEMPO_US,
    time_signature: tuple[int, int] = (4, 4),
    velocity: int = 64,
) -> MidiFile:
    """Build a canonical MidiFile around a list of tick-domain notes.

    Format 1 puts tempo/time-signature in a conductor track; format 0 merges
    everything into one track.  Note-offs sort before note-ons at equal ticks.
    """
    num, den = time_signature
    meta = [
        MetaEvent(0, META_TEMPO, tempo_us.to_bytes(3, "big")),
        MetaEvent(0, META_TIME_SIGNATURE,
                  bytes([num, (den.bit_length() - 1), 24, 8])),
    ]
    timed = []  # (tick, rank, pitch, event-template)
    for note in notes:
        on = ChannelEvent(0, NOTE_ON | note.channel, bytes([note.pitch, velocity]))
        off = ChannelEvent(0, NOTE_OFF | note.channel, bytes([note.pitch, 0]))
        timed.append((note.onset_ticks, 1, note.pitch, on))
        timed.append((note.onset_ticks + note.duration_ticks, 0, note.pitch, off))
    timed.sort(key=lambda item: item[:3])

    def to_track(events_with_ticks):
        track = []
        prev = 0
        for tick, event in events_with_ticks:
            track.append(type(event)(tick - prev, *_event_args(event)))
            prev = tick
        track.append(MetaEvent(0, META_END_OF_TRACK, b""))
        return track

    note_stream = [(tick, ev) for tick, _, _, ev in timed]
    if format == 1:
        tracks = [to_track([(0, m) for m in meta]), to_track(note_stream)]
    else:
        tracks = [to_track([(0, m) for m in meta] + note_stream)]
    return MidiFile(format=format, ppq=ppq, tracks=tracks)


def _event_args(event):
    if isinstance(event, MetaEvent):
        return event.meta_type, event.data
    return event.status, event.data
