import numpy as np
import pytest
from hypothesis import given, strategies as st

from cranelang import language as lang
from cranelang.env.success import SuccessEvent


def test_vocabulary_indexes():
    assert lang.VOCAB_SIZE == 18
    assert lang.TOKEN_INDEX["silence"] == 0
    assert [lang.TOKEN_INDEX[v] for v in lang.VERBS] == list(range(1, 7))
    assert [lang.TOKEN_INDEX[c] for c in lang.COLORS] == list(range(7, 13))
    assert [lang.TOKEN_INDEX[s] for s in lang.SHAPES] == list(range(13, 18))
    assert sorted(lang.TOKEN_INDEX.values()) == list(range(18))


def test_encode_watch_red_pillar():
    rows = lang.encode_sentence(lang.Sentence.parse("Watch Red Pillar"))
    expected = np.zeros((3, 18))
    expected[0, 1] = expected[1, 7] = expected[2, 13] = 1
    np.testing.assert_array_equal(rows, expected)


def test_push_right_yellow_hourglass_indexes():
    s = lang.Sentence.parse("Push Right Yellow Hourglass")
    assert s.indexes == (6, 12, 17)
    assert lang.encode_sentence(s).argmax(axis=1).tolist() == [6, 12, 17]


sentences = st.builds(lang.Sentence, st.integers(1, 6), st.integers(7, 12), st.integers(13, 17))


@given(sentences)
def test_decode_encode_roundtrip(s):
    rows = lang.encode_sentence(s)
    assert lang.decode(rows) == s
    assert set(np.unique(rows)) <= {0.0, 1.0}
    np.testing.assert_array_equal(rows.sum(axis=1), 1.0)
    assert lang.Sentence.parse(str(s)) == s


def test_silence():
    row = lang.silence()
    assert row.shape == (1, 18) and row.sum() == 1 and row[0, 0] == 1
    assert lang.decode(row) is None


def test_feedback_sentence():
    rows = lang.feedback_sentence(SuccessEvent("touch_the_top", "yellow", "pillar"))
    assert rows.argmax(axis=1).tolist() == [3, 12, 13]
    np.testing.assert_array_equal(lang.feedback_sentence(None), lang.silence())
    cmd = lang.encode_sentence(lang.Sentence.parse("touch_the_top yellow pillar"))
    np.testing.assert_array_equal(rows, cmd)
    assert rows.dtype == cmd.dtype and rows.shape == cmd.shape


def test_invalid_sentences():
    with pytest.raises(lang.InvalidSentence):
        lang.Sentence(7, 7, 13)
    with pytest.raises(lang.InvalidSentence):
        lang.Sentence.parse("dance red pillar")
    with pytest.raises(lang.InvalidSentence):
        lang.get_scale("small").validate(lang.Sentence.parse("push_right red pillar"))


def test_scale_presets():
    assert len(lang.SCALES["full"].all_sentences()) == 180
    assert len(lang.SCALES["middle"].all_sentences()) == 100
    assert len(lang.SCALES["small"].all_sentences()) == 48
    for sc in lang.SCALES.values():
        assert sc.verbs == tuple(range(1, 1 + sc.n_verbs))


@pytest.mark.parametrize("scale,n_train", [("full", 60), ("middle", 33), ("small", 16), ("smoke", 3)])
def test_split_sizes(scale, n_train):
    sp = lang.generate_split(scale, 0)
    assert len(sp.train) == n_train
    assert len(sp.train) + len(sp.test) == len(lang.get_scale(scale).all_sentences())


@pytest.mark.parametrize("scale", ["full", "middle", "small", "smoke"])
def test_split_invariants_over_seeds(scale):
    sc = lang.get_scale(scale)
    everything = set(sc.all_sentences())
    for seed in range(100):
        sp = lang.generate_split(sc, seed)
        train, test = set(sp.train), set(sp.test)
        assert not train & test and train | test == everything
        # counting oracle over emitted training sentences
        for tok in sc.verbs + sc.colors + sc.shapes:
            assert sum(tok in s.indexes for s in sp.train) >= 1


def test_split_deterministic_and_seed_dependent():
    assert lang.generate_split("full", 5) == lang.generate_split("full", 5)
    assert lang.generate_split("full", 5).train != lang.generate_split("full", 6).train


def test_split_file_roundtrip(tmp_path):
    sp = lang.generate_split("small", 3)
    path = tmp_path / "split.txt"
    lang.save_split(sp, path)
    text = path.read_text().splitlines()
    assert text[0].startswith("# scale=small")
    assert "|" in text[2]
    assert lang.load_split(path) == sp


def test_pad_voice():
    rows, n = lang.pad_voice(lang.silence())
    assert n == 1 and rows.shape == (3, 18)
    np.testing.assert_array_equal(rows.argmax(axis=1), 0)
