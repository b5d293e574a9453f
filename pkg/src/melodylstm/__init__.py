"""melodylstm: classify monophonic MIDI melodies as human or machine made.

The pipeline is byte-level SMF parsing, tempo-independent beat conversion,
monophony enforcement, grid quantization, bar segmentation, one-hot encoding,
and a from-scratch stacked-LSTM classifier trained with Adam.  The `kernels`
subpackage holds the hot recurrence loops in both a compiled and a pure-numpy
form.
"""

from .encode import Batch, EncodedSequence, Vocabularies, build_vocab, encode_sequence, pad_batch
from .errors import DivergedError, MelodyLstmError
from .harness import Metrics, evaluate, prepare_dataset, split
from .midi_io import (
    MidiFile,
    NoteEvent,
    TempoMap,
    extract_notes,
    notes_to_midifile,
    parse_smf,
    write_smf,
)
from .model import (
    LstmLayerParams,
    ModelParams,
    backward,
    forward,
    init_params,
    load_checkpoint,
    loss,
    lstm_cell,
    predict,
    save_checkpoint,
)
# the training entry point stays namespaced (melodylstm.train.train) so the
# package attribute `train` keeps pointing at the submodule
from .preprocess import FeatureRow, MelodySequence, extract_features, pitch_name
from .synth import SynthConfig, gen_label0, gen_label1, write_corpus
from .train import EpochStats, TrainConfig, history_to_csv

__version__ = "0.1.0"

__all__ = [
    "Batch", "EncodedSequence", "Vocabularies", "build_vocab",
    "encode_sequence", "pad_batch",
    "DivergedError", "MelodyLstmError",
    "Metrics", "evaluate", "prepare_dataset", "split",
    "MidiFile", "NoteEvent", "TempoMap", "extract_notes",
    "notes_to_midifile", "parse_smf", "write_smf",
    "LstmLayerParams", "ModelParams", "backward", "forward", "init_params",
    "load_checkpoint", "loss", "lstm_cell", "predict", "save_checkpoint",
    "FeatureRow", "MelodySequence", "extract_features", "pitch_name",
    "SynthConfig", "gen_label0", "gen_label1", "write_corpus",
    "EpochStats", "TrainConfig", "history_to_csv",
    "__version__",
]
