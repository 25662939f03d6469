import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emb2emb import text
from emb2emb.text import BOS, EOS, PAD, UNK, NoiseConfig, Vocab


class TestVocab:
    def test_empty_corpus_keeps_reserved_only(self):
        v = text.build_vocab([], cap=10)
        assert v.itos == list(text.RESERVED)

    def test_frequency_order(self):
        v = text.build_vocab(["a a b"], cap=5)
        assert "b" not in v
        v = text.build_vocab(["a a b"], cap=6)
        assert v.id("a") < v.id("b")

    def test_cap_arithmetic(self):
        v = text.build_vocab([" ".join(f"w{i}" for i in range(10))], cap=5)
        assert len(v) == 5

    def test_ties_broken_by_first_occurrence(self):
        v = text.build_vocab(["z y x", "x y z"], cap=10)
        assert v.itos[4:] == ["z", "y", "x"]

    def test_reserved_ids(self):
        v = Vocab(["a"])
        assert (v.id("<pad>"), v.id("<s>"), v.id("</s>"), v.id("<unk>")) == (PAD, BOS, EOS, UNK)

    def test_cap_too_small(self):
        with pytest.raises(ValueError):
            Vocab([], cap=4)

    def test_save_load_round_trip(self, tmp_path):
        v = text.build_vocab(["the food was good", "the soup was cold"])
        v.save(tmp_path / "vocab.txt")
        w = Vocab.load(tmp_path / "vocab.txt")
        assert w == v and w.fingerprint() == v.fingerprint()

    def test_load_rejects_bad_header(self, tmp_path):
        (tmp_path / "v.txt").write_text("a\nb\n")
        with pytest.raises(ValueError):
            Vocab.load(tmp_path / "v.txt")

    def test_deterministic(self):
        lines = ["b c a", "c c d"]
        assert text.build_vocab(lines, 7) == text.build_vocab(list(lines), 7)


class TestEncodeDecode:
    def test_round_trip(self):
        v = text.build_vocab(["the pizza was great"])
        assert text.decode_tokens(text.encode_text("the pizza was great", v), v) == "the pizza was great"

    def test_truncates_to_100(self):
        v = text.build_vocab(["a"])
        assert len(text.encode_text(" ".join(["a"] * 150), v)) == 100

    def test_unknown_token(self):
        v = text.build_vocab(["a"])
        assert text.encode_text("a zebra", v) == [4, UNK]

    def test_decode_stops_at_eos_and_skips_padding(self):
        v = text.build_vocab(["a b"])
        assert text.decode_tokens([BOS, 4, 5, EOS, 4, PAD], v) == "a b"

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.sampled_from("abcdefg"), min_size=1, max_size=30))
    def test_round_trip_property(self, toks):
        s = " ".join(toks)
        v = text.build_vocab([s])
        ids = text.encode_text(s, v)
        assert PAD not in ids
        assert text.decode_tokens(ids, v) == s


class TestNoise:
    def test_zero_drop_is_identity(self):
        ids = list(range(4, 20))
        assert text.apply_noise(ids, NoiseConfig(0.0), np.random.default_rng(0)) == ids

    def test_full_drop_keeps_one(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            assert len(text.apply_noise(list(range(4, 14)), NoiseConfig(1.0), rng)) == 1

    def test_mean_deletions(self):
        rng = np.random.default_rng(0)
        ids = list(range(4, 24))
        dels = [20 - len(text.apply_noise(ids, NoiseConfig(0.3), rng)) for _ in range(10_000)]
        assert abs(np.mean(dels) - 6.0) <= 0.15

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            text.apply_noise([], NoiseConfig(), np.random.default_rng(0))

    def test_bad_probability(self):
        with pytest.raises(ValueError):
            NoiseConfig(1.5)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(4, 50), min_size=1, max_size=40), st.floats(0, 1), st.integers(0, 2**31))
    def test_survivors_are_a_subsequence(self, ids, p, seed):
        out = text.apply_noise(ids, NoiseConfig(p), np.random.default_rng(seed))
        assert 1 <= len(out) <= len(ids)
        it = iter(ids)
        assert all(tok in it for tok in out)


class TestBatching:
    def test_sizes(self):
        corpus = [[4], [5, 6], [7], [8, 9, 10], [11]]
        assert [len(b.index) for b in text.batch_iter(corpus, 2)] == [2, 2, 1]

    def test_padding_and_lengths(self):
        b = next(text.batch_iter([[4], [5, 6, 7]], 2))
        np.testing.assert_array_equal(b.ids, [[4, PAD, PAD], [5, 6, 7]])
        np.testing.assert_array_equal(b.lengths, [1, 3])

    def test_seeded_shuffle(self):
        corpus = [[i + 4] for i in range(17)]
        a = [b.index.tolist() for b in text.batch_iter(corpus, 4, True, np.random.default_rng(3))]
        b = [b.index.tolist() for b in text.batch_iter(corpus, 4, True, np.random.default_rng(3))]
        assert a == b
        assert sorted(i for batch in a for i in batch) == list(range(17))

    def test_empty_corpus(self):
        assert list(text.batch_iter([], 4)) == []

    def test_bad_batch_size(self):
        with pytest.raises(ValueError):
            list(text.batch_iter([[4]], 0))


class TestCorpora:
    def test_parallel_length_mismatch(self):
        with pytest.raises(ValueError):
            text.ParallelCorpus(["a"], [])

    def test_labels_must_be_binary(self):
        with pytest.raises(ValueError):
            text.LabeledCorpus(["a"], [2])

    def test_labeled_round_trip(self, tmp_path):
        c = text.LabeledCorpus(["good food", "bad food"], [1, 0])
        text.write_labeled(tmp_path / "d.tsv", c)
        d = text.load_labeled(tmp_path / "d.tsv")
        assert d.texts == c.texts and d.labels == c.labels
        assert d.of_class(0) == ["bad food"]

    def test_labeled_bad_line(self, tmp_path):
        (tmp_path / "d.tsv").write_text("3\tfoo\n")
        with pytest.raises(ValueError, match="d.tsv:1"):
            text.load_labeled(tmp_path / "d.tsv")

    def test_two_file_loader(self, tmp_path):
        (tmp_path / "neg").write_text("bad\n\n")
        (tmp_path / "pos").write_text("good\nfine\n")
        c = text.load_labeled_files(tmp_path / "neg", tmp_path / "pos")
        assert c.labels == [0, 1, 1]
