"""End-to-end acceptance checks; one pass/fail line per criterion is printed
in the terminal summary (see conftest.record_criterion)."""
import time

import numpy as np
import pytest

from conftest import record_criterion
from melodylstm import model
from melodylstm.cli import main
from melodylstm.encode import Batch, build_vocab, decode_step, encode_row
from melodylstm.harness import evaluate, load_prepared, prepare_dataset
from melodylstm.midi_io import (
    read_vlq,
    write_vlq,
    NoteEvent,
    notes_to_midifile,
    parse_smf,
    write_smf,
)
from melodylstm.preprocess import FeatureRow, MelodySequence
from melodylstm.synth import SynthConfig, write_corpus
from melodylstm.train import TrainConfig, history_to_csv, train


def run_pipeline(root, seed, n_label0=300, n_label1=300, epochs=50,
                 quantize=True):
    """synth -> prepare -> train with library defaults; returns run facts."""
    t0 = time.perf_counter()
    corpus = root / f"corpus{seed}"
    prep = root / f"prep{seed}"
    write_corpus(SynthConfig(seed=seed, n_label0=n_label0,
                             n_label1=n_label1), corpus)
    report = prepare_dataset(corpus, prep, seed=seed, quantize_grid=quantize)
    _, train_batch, val_batch = load_prepared(prep)
    best, history = train(train_batch, val_batch,
                          TrainConfig(epochs=epochs, seed=seed))
    preds = model.predict(best, val_batch)
    metrics = evaluate([label for label, _ in preds],
                       [int(y) for y in val_batch.labels])
    return {
        "report": report,
        "best_val_acc": max(h.val_acc for h in history),
        "epochs_run": len(history),
        "history_csv": history_to_csv(history),
        "metrics": metrics,
        "elapsed": time.perf_counter() - t0,
    }


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def separability_runs(workdir):
    return {seed: run_pipeline(workdir / "sep", seed)
            for seed in (41, 42, 43, 44, 45)}


def one_hot_batch(rng, n, t, dim, lengths):
    x = np.zeros((n, t, dim), dtype=np.uint8)
    for i in range(n):
        for s in range(lengths[i]):
            x[i, s, rng.integers(0, dim)] = 1
    return Batch(x, np.asarray(lengths), rng.integers(0, 2, size=n))


def max_grad_error(batch, params, delta=1e-5):
    probs, cache = model.forward(batch, params)
    grads = model.backward(cache, batch.labels, params)
    worst = 0.0
    for name, arr in params.arrays().items():
        view = np.atleast_1d(arr)
        grad = np.atleast_1d(grads[name])
        for idx in np.ndindex(view.shape):
            orig = view[idx]
            view[idx] = orig + delta
            hi = model.loss(model.forward(batch, params)[0], batch.labels)
            view[idx] = orig - delta
            lo = model.loss(model.forward(batch, params)[0], batch.labels)
            view[idx] = orig
            num = (hi - lo) / (2 * delta)
            worst = max(worst, abs(num - grad[idx]) / max(1.0, abs(num)))
    return worst


def test_criterion_01_gradient_correctness(rng):
    ok = False
    try:
        t0 = time.perf_counter()
        batch = one_hot_batch(rng, n=4, t=7, dim=10, lengths=[7, 5, 7, 3])
        uni = model.init_params(10, hidden1=6, hidden2=3, seed=1,
                                dropout_rate=0.0)
        bidi = model.init_params(10, hidden1=6, hidden2=3, seed=2,
                                 bidirectional=True, dropout_rate=0.0)
        err_uni = max_grad_error(batch, uni)
        err_bidi = max_grad_error(batch, bidi)
        elapsed = time.perf_counter() - t0
        ok = err_uni < 1e-4 and err_bidi < 1e-4 and elapsed < 10.0
    finally:
        record_criterion(
            1, "BPTT gradients match finite differences (< 1e-4, < 10 s)", ok)
    assert ok, (err_uni, err_bidi, elapsed)


def test_criterion_02_parser_fidelity(rng):
    ok = False
    try:
        t0 = time.perf_counter()
        for value in (0, 127, 128, 16383, 16384, 2 ** 28 - 1):
            data = write_vlq(value)
            assert read_vlq(data, 0) == (value, len(data))
        mismatches = 0
        for i in range(1000):
            n_notes = int(rng.integers(1, 25))
            tick = 0
            notes = []
            for _ in range(n_notes):
                tick += int(rng.integers(0, 960))
                notes.append(NoteEvent(int(rng.integers(0, 128)), tick,
                                       int(rng.integers(1, 1920))))
            file = notes_to_midifile(
                notes,
                ppq=int(rng.choice([96, 192, 480, 960])),
                format=int(rng.integers(0, 2)),
                tempo_us=int(rng.integers(200_000, 1_500_000)),
                time_signature=(int(rng.choice([2, 3, 4, 6])), 4),
                velocity=int(rng.integers(1, 128)))
            mismatches += parse_smf(write_smf(file)) != file
        elapsed = time.perf_counter() - t0
        ok = mismatches == 0 and elapsed < 5.0
    finally:
        record_criterion(
            2, "parse/write identity on 1000 files + VLQ boundaries (< 5 s)",
            ok)
    assert ok


def test_criterion_03_reference_feature_matrix(four_note_bytes, tmp_path,
                                               capsys):
    ok = False
    try:
        target = tmp_path / "melody.mid"
        target.write_bytes(four_note_bytes)
        code = main(["inspect", str(target)])
        out = capsys.readouterr().out
        expected = ("# melody.mid: 4 notes, beats_per_bar=4.0\n"
                    "bar  pitch  position  duration\n"
                    "  0  C4          0.0  1.0\n"
                    "  0  E4          1.0  0.5\n"
                    "  0  G4          1.5  0.5\n"
                    "  0  C5          2.0  2.0\n")
        ok = code == 0 and out == expected
    finally:
        record_criterion(
            3, "inspect reproduces the reference four-note feature matrix", ok)
    assert ok


def test_criterion_04_encoding_invariants(rng):
    ok = False
    try:
        rows = [FeatureRow(60, k * 0.25, d)
                for k in range(4) for d in (0.25, 0.5, 1.0, 2.0)]
        corpus = [MelodySequence(rows, [0] * len(rows), source_id="v",
                                 beats_per_bar=4.0, short=False)]
        vocab = build_vocab(corpus, 0.25, 4.0)
        p, q = vocab.pitch_size, vocab.position_size
        bad = 0
        for _ in range(10_000):
            row = FeatureRow(int(rng.integers(0, 128)),
                             float(rng.integers(0, q)) * 0.25,
                             float(rng.choice([0.25, 0.5, 1.0, 2.0])))
            step = encode_row(row, vocab)
            sums = (int(step[:p].sum()), int(step[p:p + q].sum()),
                    int(step[p + q:].sum()))
            bad += sums != (1, 1, 1)
            bad += decode_step(step, vocab) != row
        pad = np.zeros(vocab.step_size, dtype=np.uint8)
        ok = bad == 0 and pad.sum() == 0
    finally:
        record_criterion(
            4, "10k encoded steps: block sums (1,1,1), decode inverts encode",
            ok)
    assert ok


def test_criterion_05_padding_invariance(rng):
    ok = False
    try:
        params = model.init_params(20, hidden1=6, hidden2=3, seed=3)
        batch = one_hot_batch(rng, n=6, t=12, dim=20,
                              lengths=[12, 7, 1, 9, 12, 4])
        base, _ = model.forward(batch, params)
        ok = True
        for k in (1, 8, 32):
            pad = np.zeros((6, k, 20), dtype=np.uint8)
            wider = Batch(np.concatenate([batch.x, pad], axis=1),
                          batch.lengths, batch.labels)
            probs, _ = model.forward(wider, params)
            ok = ok and np.array_equal(probs, base)
    finally:
        record_criterion(
            5, "predictions bitwise unchanged under +{1,8,32} pad steps", ok)
    assert ok


def test_criterion_06_synthetic_separability(separability_runs):
    ok = False
    try:
        passing = [seed for seed, run in separability_runs.items()
                   if run["best_val_acc"] >= 0.95
                   and run["epochs_run"] <= 50
                   and run["elapsed"] < 300.0]
        ok = len(passing) >= 4
    finally:
        record_criterion(
            6, "synth 300+300 -> train reaches val acc >= 0.95 (4 of 5 seeds)",
            ok)
    assert ok, {seed: run["best_val_acc"]
                for seed, run in separability_runs.items()}


def test_criterion_07_overfit_capacity(workdir):
    ok = False
    try:
        corpus = workdir / "tiny"
        prep = workdir / "tiny_prep"
        write_corpus(SynthConfig(seed=7, n_label0=8, n_label1=8), corpus)
        prepare_dataset(corpus, prep, seed=7, val_fraction=0.5)
        _, train_batch, val_batch = load_prepared(prep)
        sixteen = train_batch if len(train_batch) == 16 else val_batch
        config = TrainConfig(epochs=200, seed=7, early_stop_patience=200)
        _, history = train(sixteen, sixteen, config)
        ok = len(history) == 200 and history[-1].train_acc == 1.0
    finally:
        record_criterion(7, "16 examples overfit to train acc 1.0", ok)
    assert ok


def test_criterion_08_deterministic_training(workdir, separability_runs):
    ok = False
    try:
        again = run_pipeline(workdir / "rerun", 42)
        ok = again["history_csv"] == separability_runs[42]["history_csv"]
    finally:
        record_criterion(
            8, "re-running the seed-42 pipeline reproduces history.csv", ok)
    assert ok


def test_criterion_09_grid_shortcut_ablation(workdir, separability_runs):
    ok = False
    try:
        raw = run_pipeline(workdir / "raw", 42, quantize=False)
        report = raw["report"]
        quantized_occ = separability_runs[42]["report"]["grid_occupancy"]
        ok = (raw["best_val_acc"] >= 0.99
              and report["grid_shortcut_suspected"] is True
              and report["grid_occupancy"]["label0"]
              < report["grid_occupancy"]["label1"]
              and quantized_occ == {"label0": 1.0, "label1": 1.0})
    finally:
        record_criterion(
            9, "no-quantize run is trivially separable and flagged; "
               "quantized grids match", ok)
    assert ok


def test_criterion_10_imbalance_handling(workdir):
    ok = False
    try:
        recalls = {}
        for seed in (41, 42, 43, 44, 45):
            run = run_pipeline(workdir / "imb", seed, n_label0=300,
                               n_label1=50)
            recalls[seed] = run["metrics"].recall
        ok = sum(r >= 0.85 for r in recalls.values()) >= 4
    finally:
        record_criterion(
            10, "6:1 imbalance: minority recall >= 0.85 (4 of 5 seeds)", ok)
    assert ok, recalls
