"""Exception and warning types shared across the package."""


class MelodyLstmError(Exception):
    """Base class for all errors raised by this package."""


# --- MIDI file layer ---------------------------------------------------------

class BadMagicError(MelodyLstmError):
    """Input does not start with an MThd chunk."""


class UnsupportedFormatError(MelodyLstmError):
    """SMF format 2 (multi-song) files are not supported."""


class UnsupportedDivisionError(MelodyLstmError):
    """SMPTE time division is not supported; PPQ division only."""


class TruncatedChunkError(MelodyLstmError):
    """A chunk header or body ends before its declared length."""


class TruncatedInputError(MelodyLstmError):
    """Byte stream ended in the middle of a field."""


class UnterminatedVlqError(MelodyLstmError):
    """A variable-length quantity ran past its 4-byte maximum."""


class InvariantViolationError(MelodyLstmError):
    """A structure handed to a writer violates its documented invariants."""


class NoNotesError(MelodyLstmError):
    """The file contains zero note events."""


# --- Preprocessing -----------------------------------------------------------

class EmptyAfterEnforcementError(MelodyLstmError):
    """Monophony enforcement left no notes."""


class TooShortError(MelodyLstmError):
    """Melody spans less than one full bar."""


class MixedMeterError(MelodyLstmError):
    """File declares more than one distinct time signature."""


# --- Encoding ----------------------------------------------------------------

class EmptyCorpusError(MelodyLstmError):
    """Vocabulary construction needs a non-empty corpus."""


class UnknownPositionError(MelodyLstmError):
    """A position token is off the vocabulary grid (pipeline bug)."""


# --- Model -------------------------------------------------------------------

class DimensionMismatchError(MelodyLstmError):
    """Array shapes are inconsistent with the declared model dimensions."""


class NonFiniteActivationError(MelodyLstmError):
    """Forward pass produced NaN/Inf activations."""


class VocabMismatchError(MelodyLstmError):
    """Encoded input dimension does not match the model input dimension."""


class VersionMismatchError(MelodyLstmError):
    """Checkpoint container version is not understood."""


class DigestMismatchError(MelodyLstmError):
    """Checkpoint was trained against a different vocabulary."""


class CorruptCheckpointError(MelodyLstmError):
    """Checkpoint bytes cannot be decoded into parameters."""


class DivergedError(MelodyLstmError):
    """Training hit a non-finite loss.

    Carries the last finite parameters and the history recorded so far so
    callers can still persist a usable checkpoint.
    """

    def __init__(self, message, params=None, history=None):
        super().__init__(message)
        self.params = params
        self.history = history if history is not None else []


# --- Harness -----------------------------------------------------------------

class TooFewItemsError(MelodyLstmError):
    """A split stratum would be empty."""


class LengthMismatchError(MelodyLstmError):
    """Predictions and labels differ in length (or are empty)."""


# --- Repair warnings ---------------------------------------------------------

class MidiRepairWarning(UserWarning):
    """Base class for recoverable oddities found while reading MIDI data."""


class DanglingNoteOnWarning(MidiRepairWarning):
    """Note-on without a matching note-off; closed at end of track."""


class ZeroLengthNoteWarning(MidiRepairWarning):
    """Note-on and note-off at the same tick; note dropped."""


class MissingEndOfTrackWarning(MidiRepairWarning):
    """Track chunk did not end with an End-of-Track meta event."""


class SequenceTruncatedWarning(UserWarning):
    """An encoded sequence was longer than max_len and got truncated."""
