import json

import pytest

from melodylstm.errors import LengthMismatchError, TooFewItemsError
from melodylstm.harness import evaluate, load_prepared, prepare_dataset, split
from melodylstm.synth import SynthConfig, write_corpus


class TestEvaluate:
    def test_confusion_counts(self):
        m = evaluate([1, 0, 1, 0], [1, 1, 0, 0])
        assert (m.tp, m.fp, m.tn, m.fn) == (1, 1, 1, 1)
        assert m.accuracy == 0.5
        assert m.precision == 0.5
        assert m.recall == 0.5
        assert m.f1 == 0.5
        assert not m.degenerate

    def test_perfect_predictions(self):
        m = evaluate([1, 0], [1, 0])
        assert m.accuracy == 1.0 and m.f1 == 1.0

    def test_all_negative_predictions_are_degenerate(self):
        m = evaluate([0, 0], [1, 0])
        assert m.degenerate
        assert m.precision == 0.0 and m.f1 == 0.0
        assert m.recall == 0.0

    def test_no_positive_labels_is_degenerate(self):
        m = evaluate([0, 0], [0, 0])
        assert m.degenerate
        assert m.accuracy == 1.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            evaluate([1, 0], [1])

    def test_empty_rejected(self):
        with pytest.raises(LengthMismatchError):
            evaluate([], [])

    def test_as_dict_round_trips_through_json(self):
        m = evaluate([1, 0, 1, 0], [1, 1, 0, 0])
        payload = json.loads(json.dumps(m.as_dict()))
        assert payload["tp"] == 1 and payload["accuracy"] == 0.5


def items(n0, n1):
    return ([{"name": f"a{i}", "label": 0} for i in range(n0)]
            + [{"name": f"b{i}", "label": 1} for i in range(n1)])


class TestSplit:
    def test_stratified_sizes(self):
        train, val = split(items(5, 5), val_fraction=0.4, seed=0)
        assert len(train) == 6 and len(val) == 4
        assert sum(x["label"] for x in val) == 2
        assert sum(x["label"] for x in train) == 3

    def test_partition_is_disjoint_and_exhaustive(self):
        all_items = items(7, 5)
        train, val = split(all_items, val_fraction=0.4, seed=3)
        names = sorted(x["name"] for x in train + val)
        assert names == sorted(x["name"] for x in all_items)
        assert not {x["name"] for x in train} & {x["name"] for x in val}

    def test_seed_changes_membership_not_sizes(self):
        a_train, a_val = split(items(10, 10), seed=0)
        b_train, b_val = split(items(10, 10), seed=1)
        assert len(a_val) == len(b_val)
        assert ({x["name"] for x in a_val} != {x["name"] for x in b_val})

    def test_same_seed_same_split(self):
        assert split(items(8, 8), seed=5) == split(items(8, 8), seed=5)

    def test_order_is_stable(self):
        # surviving items keep their input order in both halves
        all_items = items(6, 6)
        train, val = split(all_items, seed=2)
        pos = {x["name"]: i for i, x in enumerate(all_items)}
        assert [pos[x["name"]] for x in train] == sorted(
            pos[x["name"]] for x in train)
        assert [pos[x["name"]] for x in val] == sorted(
            pos[x["name"]] for x in val)

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.2, 1.7])
    def test_degenerate_fraction_rejected(self, bad):
        with pytest.raises(TooFewItemsError):
            split(items(5, 5), val_fraction=bad)

    def test_class_too_small_to_split(self):
        with pytest.raises(TooFewItemsError):
            split(items(5, 1), val_fraction=0.4)

    def test_custom_label_getter(self):
        pairs = [("x", 0), ("y", 1), ("z", 0), ("w", 1)]
        train, val = split(pairs, val_fraction=0.5, seed=0,
                           label_of=lambda p: p[1])
        assert len(train) == 2 and len(val) == 2


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    write_corpus(SynthConfig(seed=7, n_label0=8, n_label1=8), out)
    return out


class TestPrepareDataset:
    def test_report_and_outputs(self, corpus_dir, tmp_path):
        report = prepare_dataset(corpus_dir, tmp_path / "prep", seed=0)
        assert report["files"] == 16
        assert report["prepared"] == 16
        assert report["skipped"] == []
        assert report["train"] + report["val"] == 16
        assert report["label_counts"] == {"label0": 8, "label1": 8}
        assert report["grid_step"] == 0.25
        assert report["quantize"] is True
        assert report["effective_grid_step"] == 0.25
        assert report["max_len"] >= 1
        assert len(report["vocab_digest"]) == 64
        for name in ("features.jsonl", "vocab.json", "prepare_report.json"):
            assert (tmp_path / "prep" / name).exists()

    def test_quantized_corpus_fills_the_coarse_grid(self, corpus_dir,
                                                    tmp_path):
        report = prepare_dataset(corpus_dir, tmp_path / "prep", seed=0)
        occ = report["grid_occupancy"]
        assert occ["label0"] == 1.0 and occ["label1"] == 1.0
        assert report["grid_shortcut_suspected"] is False

    def test_unquantized_corpus_flags_the_shortcut(self, corpus_dir,
                                                   tmp_path):
        report = prepare_dataset(corpus_dir, tmp_path / "raw", seed=0,
                                 quantize_grid=False)
        assert report["effective_grid_step"] == 0.25 / 16
        occ = report["grid_occupancy"]
        assert occ["label1"] == 1.0
        assert occ["label0"] < 0.7
        assert report["grid_shortcut_suspected"] is True

    def test_unreadable_file_is_skipped_not_fatal(self, corpus_dir, tmp_path):
        import shutil
        broken = tmp_path / "broken"
        shutil.copytree(corpus_dir, broken)
        (broken / "manifest.jsonl").unlink()  # force directory discovery
        (broken / "label0" / "junk.mid").write_bytes(b"not midi at all")
        report = prepare_dataset(broken, tmp_path / "prep", seed=0)
        assert report["files"] == 17
        assert report["prepared"] == 16
        assert len(report["skipped"]) == 1
        assert report["skipped"][0]["path"].endswith("junk.mid")

    # max_len is frozen from the train split, so a longer val sequence is
    # truncated on load and says so
    @pytest.mark.filterwarnings("ignore::melodylstm.errors.SequenceTruncatedWarning")
    def test_load_prepared_round_trip(self, corpus_dir, tmp_path):
        report = prepare_dataset(corpus_dir, tmp_path / "prep", seed=0)
        vocab, train_batch, val_batch = load_prepared(tmp_path / "prep")
        assert vocab.digest() == report["vocab_digest"]
        assert len(train_batch) == report["train"]
        assert len(val_batch) == report["val"]
        assert train_batch.x.shape[1] == vocab.max_len
        assert train_batch.x.shape[2] == vocab.step_size
        assert set(train_batch.labels) <= {0, 1}

    def test_works_without_manifest(self, corpus_dir, tmp_path):
        import shutil
        bare = tmp_path / "bare"
        shutil.copytree(corpus_dir, bare)
        (bare / "manifest.jsonl").unlink()
        report = prepare_dataset(bare, tmp_path / "prep", seed=0)
        assert report["prepared"] == 16

    def test_split_assignment_is_seeded(self, corpus_dir, tmp_path):
        a = prepare_dataset(corpus_dir, tmp_path / "a", seed=0)
        b = prepare_dataset(corpus_dir, tmp_path / "b", seed=0)
        assert ((tmp_path / "a" / "features.jsonl").read_text()
                == (tmp_path / "b" / "features.jsonl").read_text())
        assert a["vocab_digest"] == b["vocab_digest"]
